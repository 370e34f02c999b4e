//! Input parsing (CSV and JSON-lines), the fitted-model file schema, and
//! numeric formatting helpers.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use npmix::model::{CovarianceSpec, Dataset, Observation};
use npmix::solver::{Algorithm, SolverConfig};
use npmix::support::{Region, RegionShape};

/// Parsed input: the dataset plus the original header and rows for echoing
/// into derived outputs.
pub struct ParsedInput {
    pub dataset: Dataset,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub sha256: String,
}

/// Covariance encodings accepted in input files; exactly one per file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CovEncoding {
    Scalar,
    Diagonal,
    LowerTriangle,
}

/// Formats a float with 17 significant digits so it round-trips exactly.
pub fn fmt17(v: f64) -> String {
    format!("{:.16e}", v)
}

pub fn read_input(path: &Path) -> Result<ParsedInput> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let sha256 = hex_digest(&bytes);
    let text = String::from_utf8(bytes).context("input is not valid UTF-8")?;
    let is_jsonl = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson") | Some("json")
    );
    let (dataset, header, rows) = if is_jsonl {
        parse_jsonl(&text)?
    } else {
        parse_csv(&text)?
    };
    Ok(ParsedInput {
        dataset,
        header,
        rows,
        sha256,
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_csv(text: &str) -> Result<(Dataset, Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .context("reading CSV header")?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let layout = resolve_layout(&header)?;
    let mut observations = Vec::new();
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("row {}", idx + 1))?;
        let fields: Vec<String> = record.iter().map(|s| s.to_string()).collect();
        if fields.len() != header.len() {
            bail!(
                "row {}: expected {} fields, found {}",
                idx + 1,
                header.len(),
                fields.len()
            );
        }
        let parse = |col: usize| -> Result<f64> {
            fields[col]
                .parse::<f64>()
                .with_context(|| format!("row {}: column '{}'", idx + 1, header[col]))
        };
        let x: Vec<f64> = layout
            .x_cols
            .iter()
            .map(|&c| parse(c))
            .collect::<Result<_>>()?;
        let sigma = match layout.encoding {
            CovEncoding::Scalar => {
                CovarianceSpec::isotropic(layout.dim, parse(layout.cov_cols[0])?)
            }
            CovEncoding::Diagonal => CovarianceSpec::diagonal(
                layout
                    .cov_cols
                    .iter()
                    .map(|&c| parse(c))
                    .collect::<Result<_>>()?,
            ),
            CovEncoding::LowerTriangle => {
                let lower: Vec<f64> = layout
                    .cov_cols
                    .iter()
                    .map(|&c| parse(c))
                    .collect::<Result<_>>()?;
                CovarianceSpec::full_from_lower(layout.dim, &lower)
            }
        }
        .map_err(|e| anyhow!("row {}: {e}", idx + 1))?;
        observations
            .push(Observation::new(x, sigma).map_err(|e| anyhow!("row {}: {e}", idx + 1))?);
        rows.push(fields);
    }
    let dataset = Dataset::new(observations)?;
    Ok((dataset, header, rows))
}

struct Layout {
    dim: usize,
    x_cols: Vec<usize>,
    cov_cols: Vec<usize>,
    encoding: CovEncoding,
}

fn resolve_layout(header: &[String]) -> Result<Layout> {
    let find = |name: &str| header.iter().position(|h| h == name);
    let mut x_cols = Vec::new();
    for d in 1.. {
        match find(&format!("x_{d}")) {
            Some(c) => x_cols.push(c),
            None => break,
        }
    }
    if x_cols.is_empty() {
        bail!("no coordinate columns found (expected x_1..x_p)");
    }
    let dim = x_cols.len();
    let scalar = find("s2");
    let diag: Vec<Option<usize>> = (1..=dim).map(|d| find(&format!("s2_{d}"))).collect();
    let mut lower = Vec::new();
    for i in 1..=dim {
        for j in 1..=i {
            lower.push(find(&format!("cov_{i}{j}")));
        }
    }
    let has_diag = diag.iter().all(|c| c.is_some()) && dim >= 1 && find("s2_1").is_some();
    let has_lower = lower.iter().all(|c| c.is_some()) && !lower.is_empty();
    let encodings = [scalar.is_some(), has_diag, has_lower]
        .iter()
        .filter(|&&b| b)
        .count();
    if encodings != 1 {
        bail!(
            "expected exactly one covariance encoding (s2 | s2_1..s2_{dim} | cov_11..cov_{dim}{dim}), found {encodings}"
        );
    }
    let (encoding, cov_cols) = if let Some(c) = scalar {
        (CovEncoding::Scalar, vec![c])
    } else if has_diag {
        (
            CovEncoding::Diagonal,
            diag.into_iter().map(|c| c.unwrap()).collect(),
        )
    } else {
        (
            CovEncoding::LowerTriangle,
            lower.into_iter().map(|c| c.unwrap()).collect(),
        )
    };
    Ok(Layout {
        dim,
        x_cols,
        cov_cols,
        encoding,
    })
}

#[derive(Deserialize)]
struct JsonRecord {
    x: Vec<f64>,
    #[serde(default)]
    s2: Option<serde_json::Value>,
    #[serde(default)]
    cov: Option<Vec<f64>>,
}

fn parse_jsonl(text: &str) -> Result<(Dataset, Vec<String>, Vec<Vec<String>>)> {
    let mut observations = Vec::new();
    let mut rows = Vec::new();
    let mut dim = None;
    let mut encoding: Option<CovEncoding> = None;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(line)
            .with_context(|| format!("row {}: invalid JSON record", idx + 1))?;
        let p = *dim.get_or_insert(rec.x.len());
        if rec.x.len() != p {
            bail!("row {}: dimension {} differs from {}", idx + 1, rec.x.len(), p);
        }
        let (enc, sigma) = match (&rec.s2, &rec.cov) {
            (Some(serde_json::Value::Number(num)), None) => {
                let v = num
                    .as_f64()
                    .ok_or_else(|| anyhow!("row {}: s2 is not a float", idx + 1))?;
                (CovEncoding::Scalar, CovarianceSpec::isotropic(p, v))
            }
            (Some(serde_json::Value::Array(items)), None) => {
                let vars: Vec<f64> = items
                    .iter()
                    .map(|v| {
                        v.as_f64()
                            .ok_or_else(|| anyhow!("row {}: s2 entries must be floats", idx + 1))
                    })
                    .collect::<Result<_>>()?;
                (CovEncoding::Diagonal, CovarianceSpec::diagonal(vars))
            }
            (None, Some(lower)) => (
                CovEncoding::LowerTriangle,
                CovarianceSpec::full_from_lower(p, lower),
            ),
            _ => bail!(
                "row {}: expected exactly one of 's2' (scalar or array) or 'cov' (lower triangle)",
                idx + 1
            ),
        };
        match encoding {
            None => encoding = Some(enc),
            Some(e) if e == enc => {}
            Some(_) => bail!("row {}: mixed covariance encodings in one file", idx + 1),
        }
        let sigma = sigma.map_err(|e| anyhow!("row {}: {e}", idx + 1))?;
        let mut row: Vec<String> = rec.x.iter().map(|v| fmt17(*v)).collect();
        match enc {
            CovEncoding::Scalar => {
                if let Some(serde_json::Value::Number(num)) = &rec.s2 {
                    row.push(fmt17(num.as_f64().unwrap()));
                }
            }
            CovEncoding::Diagonal => {
                if let Some(serde_json::Value::Array(items)) = &rec.s2 {
                    for v in items {
                        row.push(fmt17(v.as_f64().unwrap()));
                    }
                }
            }
            CovEncoding::LowerTriangle => {
                for v in rec.cov.as_ref().unwrap() {
                    row.push(fmt17(*v));
                }
            }
        }
        observations.push(
            Observation::new(rec.x.clone(), sigma).map_err(|e| anyhow!("row {}: {e}", idx + 1))?,
        );
        rows.push(row);
    }
    let dataset = Dataset::new(observations)?;
    let p = dataset.dim();
    let mut header: Vec<String> = (1..=p).map(|d| format!("x_{d}")).collect();
    match encoding.unwrap() {
        CovEncoding::Scalar => header.push("s2".into()),
        CovEncoding::Diagonal => header.extend((1..=p).map(|d| format!("s2_{d}"))),
        CovEncoding::LowerTriangle => {
            for i in 1..=p {
                for j in 1..=i {
                    header.push(format!("cov_{i}{j}"));
                }
            }
        }
    }
    Ok((dataset, header, rows))
}

// ---------------------------------------------------------------------------
// fitted model file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionFile {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub diameter: f64,
}

impl RegionFile {
    pub fn from_region(region: &Region) -> Self {
        let mut out = RegionFile {
            kind: String::new(),
            vertices: None,
            lower: None,
            upper: None,
            center: None,
            radius: None,
            diameter: region.diameter,
        };
        match &region.shape {
            RegionShape::Hull { vertices } => {
                out.kind = "hull".into();
                out.vertices = Some(vertices.clone());
            }
            RegionShape::BBox { lower, upper } => {
                out.kind = "bbox".into();
                out.lower = Some(lower.clone());
                out.upper = Some(upper.clone());
            }
            RegionShape::Ball { center, radius } => {
                out.kind = "ball".into();
                out.center = Some(center.clone());
                out.radius = Some(*radius);
            }
        }
        out
    }

    pub fn to_region(&self) -> Result<Region> {
        let shape = match self.kind.as_str() {
            "hull" => RegionShape::Hull {
                vertices: self
                    .vertices
                    .clone()
                    .ok_or_else(|| anyhow!("hull region missing vertices"))?,
            },
            "bbox" => RegionShape::BBox {
                lower: self
                    .lower
                    .clone()
                    .ok_or_else(|| anyhow!("bbox region missing lower"))?,
                upper: self
                    .upper
                    .clone()
                    .ok_or_else(|| anyhow!("bbox region missing upper"))?,
            },
            "ball" => RegionShape::Ball {
                center: self
                    .center
                    .clone()
                    .ok_or_else(|| anyhow!("ball region missing center"))?,
                radius: self.radius.ok_or_else(|| anyhow!("ball region missing radius"))?,
            },
            other => bail!("unknown region kind '{other}'"),
        };
        Ok(Region {
            shape,
            diameter: self.diameter,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverFile {
    pub algorithm: String,
    pub max_iters: usize,
    pub dual_gap_tol: f64,
    pub rel_loglik_tol: f64,
    pub prune_weight_tol: f64,
    pub em_warm_start: usize,
}

impl SolverFile {
    pub fn from_config(config: &SolverConfig) -> Self {
        SolverFile {
            algorithm: match config.algorithm {
                Algorithm::Em => "em",
                Algorithm::FrankWolfe => "fw",
                Algorithm::ProjNewton => "newton",
            }
            .into(),
            max_iters: config.max_iters,
            dual_gap_tol: config.dual_gap_tol,
            rel_loglik_tol: config.rel_loglik_tol,
            prune_weight_tol: config.prune_weight_tol,
            em_warm_start: config.em_warm_start,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub input_sha256: String,
    pub seed: u64,
    pub tool_version: String,
}

/// The on-disk fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModelFile {
    pub schema_version: u32,
    pub dim: usize,
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub loglik: f64,
    pub dual_gap: f64,
    #[serde(rename = "fitted_L")]
    pub fitted_l: Vec<f64>,
    pub region: RegionFile,
    pub delta: f64,
    pub solver: SolverFile,
    pub converged: bool,
    pub provenance: Provenance,
}

impl FittedModelFile {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let model: FittedModelFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing model file {}", path.display()))?;
        if model.schema_version != 1 {
            bail!("unsupported schema_version {}", model.schema_version);
        }
        if model.atoms.len() != model.weights.len() {
            bail!("model atoms/weights length mismatch");
        }
        Ok(model)
    }
}
