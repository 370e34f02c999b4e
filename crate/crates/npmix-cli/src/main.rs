//! Command-line interface: fit a mixing measure to heteroscedastic
//! observations, denoise with a fitted model, run simulation designs, and
//! re-verify a model's optimality certificate.
//!
//! Every flag can also be set through an `NPMIX_`-prefixed environment
//! variable (for example `NPMIX_TOL` for `--tol`).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use npmix::ebayes::{denoise, RegularizationPolicy};
use npmix::kernels::kernel_matrix;
use npmix::model::{Dataset, MixingMeasure};
use npmix::sim::{
    run_regret_experiment, run_w2_trend, NoiseSpec, PriorSpec, RegretConfig, RegretReport,
    W2TrendConfig,
};
use npmix::solver::{
    dual_values, likelihood_floor, solve_weights, Algorithm, SolverConfig,
};
use npmix::support::{
    auto_grid, build_grid_capped, discretization_bound, support_region, RegionMode,
};

use npmix_cli::io::{fmt17, read_input, FittedModelFile, Provenance, RegionFile, SolverFile};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// exit codes shared with the docs: 1 parse/validation, 2 grid too large,
// 3 non-convergence, 4 failed certificate
const EXIT_PARSE: u8 = 1;
const EXIT_GRID: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;
const EXIT_CERTIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "npmix",
    version,
    about = "Nonparametric maximum likelihood for heteroscedastic Gaussian mixtures"
)]
struct Cli {
    /// Cap for internal data-parallel sections (defaults to all cores).
    #[arg(long, global = true, env = "NPMIX_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a mixing measure to observations and write a model file.
    Fit(FitArgs),
    /// Compute posterior means for observations under a fitted model.
    Denoise(DenoiseArgs),
    /// Run a synthetic design end to end and write a JSON report.
    Simulate(SimulateArgs),
    /// Re-verify the certificate stored in a model file.
    Certify(CertifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegionArg {
    Auto,
    Hull,
    Bbox,
    Ball,
}

impl From<RegionArg> for RegionMode {
    fn from(r: RegionArg) -> Self {
        match r {
            RegionArg::Auto => RegionMode::Auto,
            RegionArg::Hull => RegionMode::Hull,
            RegionArg::Bbox => RegionMode::BBox,
            RegionArg::Ball => RegionMode::Ball,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Em,
    Fw,
    Newton,
}

impl From<SolverArg> for Algorithm {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Em => Algorithm::Em,
            SolverArg::Fw => Algorithm::FrankWolfe,
            SolverArg::Newton => Algorithm::ProjNewton,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input observations (CSV with header, or JSON-lines).
    #[arg(short, long)]
    input: PathBuf,
    /// Output model file (JSON).
    #[arg(short, long)]
    output: PathBuf,
    /// Support region for the grid.
    #[arg(long, value_enum, default_value = "auto", env = "NPMIX_REGION")]
    region: RegionArg,
    /// Grid width; derived from the discretization bound when omitted.
    #[arg(long, env = "NPMIX_DELTA")]
    delta: Option<f64>,
    /// Weight optimizer.
    #[arg(long, value_enum, default_value = "newton", env = "NPMIX_SOLVER")]
    solver: SolverArg,
    /// Dual-gap tolerance for the certificate.
    #[arg(long, default_value_t = 1e-6, env = "NPMIX_TOL")]
    tol: f64,
    #[arg(long, default_value_t = 10_000, env = "NPMIX_MAX_ITERS")]
    max_iters: usize,
    /// Weights below this are zeroed after convergence.
    #[arg(long, default_value_t = 1e-10, env = "NPMIX_PRUNE")]
    prune: f64,
    /// Maximum number of grid atoms.
    #[arg(long, default_value_t = 2_000_000, env = "NPMIX_GRID_CAP")]
    grid_cap: usize,
    /// Recorded in the model's provenance block.
    #[arg(long, default_value_t = 0, env = "NPMIX_SEED")]
    seed: u64,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Fitted model from `npmix fit`.
    #[arg(short, long)]
    model: PathBuf,
    /// Output CSV; stdout if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Density-floor level; defaults to (2 pi)^{-p/2} / n.
    #[arg(long, env = "NPMIX_RHO")]
    rho: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum DesignArg {
    Circle,
    Discrete,
    Pointmass,
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthetic design to run.
    #[arg(long, value_enum)]
    design: DesignArg,
    /// Sample sizes, comma separated (a list runs the trend study).
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1, env = "NPMIX_SEED")]
    seed: u64,
    /// Replications per sample size (seeds seed..seed+reps-1).
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Report JSON path; stdout if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Plot-ready CSV of raw/true/denoised/oracle points and fitted atoms
    /// (first replication only).
    #[arg(long)]
    points_csv: Option<PathBuf>,
    /// Circle prior radius.
    #[arg(long, default_value_t = 2.0)]
    radius: f64,
    /// Cluster separation for the discrete design.
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    /// Diagonal noise variance range.
    #[arg(long, default_value_t = 0.5)]
    noise_low: f64,
    #[arg(long, default_value_t = 0.75)]
    noise_high: f64,
    #[arg(long, env = "NPMIX_DELTA")]
    delta: Option<f64>,
    #[arg(long, default_value_t = 40_000, env = "NPMIX_GRID_CAP")]
    grid_cap: usize,
    #[arg(long, default_value_t = 1e-6, env = "NPMIX_TOL")]
    tol: f64,
    #[arg(long, default_value_t = 20_000, env = "NPMIX_MAX_ITERS")]
    max_iters: usize,
    #[arg(long, env = "NPMIX_RHO")]
    rho: Option<f64>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("npmix: could not configure {threads} threads: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Denoise(args) => cmd_denoise(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Certify(args) => cmd_certify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("npmix: {e:#}");
            ExitCode::from(classify_error(&e))
        }
    }
}

fn classify_error(e: &anyhow::Error) -> u8 {
    if let Some(npmix::Error::GridTooLarge { .. }) = e.downcast_ref::<npmix::Error>() {
        return EXIT_GRID;
    }
    EXIT_PARSE
}

fn cmd_fit(args: FitArgs) -> Result<ExitCode> {
    let parsed = read_input(&args.input)?;
    let data = parsed.dataset;
    let region = support_region(&data, args.region.into());
    let grid = match args.delta {
        Some(delta) => build_grid_capped(&region, delta, args.grid_cap)?,
        None => auto_grid(&region, &data, args.grid_cap)?.0,
    };
    let kernel = kernel_matrix(&data, &grid.atoms)?;
    let config = SolverConfig {
        algorithm: args.solver.into(),
        max_iters: args.max_iters,
        dual_gap_tol: args.tol,
        prune_weight_tol: args.prune,
        ..SolverConfig::default()
    };
    let fit = solve_weights(&kernel, &config)?;
    let converged = fit.certificate.converged;
    // keep only supported atoms in the model file
    let measure = MixingMeasure::new(grid.atoms.clone(), fit.weights.clone())?;
    let model = FittedModelFile {
        schema_version: 1,
        dim: data.dim(),
        atoms: measure.atoms().to_vec(),
        weights: measure.weights().to_vec(),
        loglik: fit.certificate.loglik,
        dual_gap: fit.certificate.dual_gap,
        fitted_l: fit.certificate.fitted_l.clone(),
        region: RegionFile::from_region(&region),
        delta: grid.delta,
        solver: SolverFile::from_config(&config),
        converged,
        provenance: Provenance {
            input_sha256: parsed.sha256,
            seed: args.seed,
            tool_version: TOOL_VERSION.into(),
        },
    };
    model.write(&args.output)?;
    eprintln!(
        "fit: n={} p={} m={} atoms_kept={} loglik={:.6} dual_gap={:.3e} iters={} converged={}",
        data.len(),
        data.dim(),
        grid.atoms.len(),
        measure.len(),
        fit.certificate.loglik,
        fit.certificate.dual_gap,
        fit.certificate.iters,
        converged
    );
    if converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "npmix: iteration budget exhausted before the dual-gap tolerance; model written with converged=false"
        );
        Ok(ExitCode::from(EXIT_NONCONVERGED))
    }
}

fn cmd_denoise(args: DenoiseArgs) -> Result<ExitCode> {
    let parsed = read_input(&args.input)?;
    let data = parsed.dataset;
    let model = FittedModelFile::read(&args.model)?;
    if model.dim != data.dim() {
        bail!(
            "model dimension {} does not match input dimension {}",
            model.dim,
            data.dim()
        );
    }
    let measure = MixingMeasure::new(model.atoms.clone(), model.weights.clone())?;
    let policy = match args.rho {
        Some(rho) => RegularizationPolicy::new(rho)?,
        None => RegularizationPolicy::default_for(data.dim(), data.len()),
    };
    let summaries = denoise(&data, &measure, &policy)?;
    let mut out = String::new();
    let mut header = parsed.header.clone();
    for d in 1..=data.dim() {
        header.push(format!("thetahat_{d}"));
    }
    header.push("max_responsibility".into());
    header.push("used_regularization".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for (row, summary) in parsed.rows.iter().zip(&summaries) {
        let mut fields = row.clone();
        for v in &summary.mean {
            fields.push(fmt17(*v));
        }
        let max_r = summary
            .responsibilities
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        fields.push(fmt17(max_r));
        fields.push(summary.used_regularization.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    match &args.output {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SimulationSummary {
    median_mse_raw: f64,
    median_mse_eb: f64,
    median_mse_oracle: f64,
    median_regret: f64,
    se_regret: f64,
}

#[derive(Serialize)]
struct SimulationReport {
    design: String,
    n: usize,
    reps: Vec<RegretReport>,
    summary: SimulationSummary,
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let noise = NoiseSpec::DiagUniform {
        low: args.noise_low,
        high: args.noise_high,
    };
    let report_json = match args.design {
        DesignArg::Pointmass if args.n.len() > 1 => {
            let config = W2TrendConfig {
                grid_cap: args.grid_cap,
                dual_gap_tol: args.tol,
                max_iters: args.max_iters,
                delta: args.delta,
                ..W2TrendConfig::new(
                    vec![0.0, 0.0],
                    noise,
                    args.n.clone(),
                    (args.seed..args.seed + args.reps.max(1) as u64).collect(),
                )
            };
            let report = run_w2_trend(&config)?;
            serde_json::to_string_pretty(&report)?
        }
        _ => {
            let prior = match args.design {
                DesignArg::Circle => PriorSpec::circle(args.radius),
                DesignArg::Pointmass => PriorSpec::PointMass { mu: vec![0.0, 0.0] },
                DesignArg::Discrete => PriorSpec::Discrete {
                    atoms: vec![
                        vec![0.0, 0.0],
                        vec![args.separation, 0.0],
                        vec![0.0, args.separation],
                    ],
                    weights: vec![0.4, 0.3, 0.3],
                },
            };
            let n = args.n[0];
            let mut reports = Vec::new();
            let mut first_artifacts = None;
            for rep in 0..args.reps.max(1) {
                let config = RegretConfig {
                    delta: args.delta,
                    grid_cap: args.grid_cap,
                    dual_gap_tol: args.tol,
                    max_iters: args.max_iters,
                    rho: args.rho,
                    ..RegretConfig::new(prior.clone(), noise.clone(), n, args.seed + rep as u64)
                };
                let artifacts = run_regret_experiment(&config)?;
                reports.push(artifacts.report.clone());
                if rep == 0 {
                    first_artifacts = Some(artifacts);
                }
            }
            if let (Some(path), Some(artifacts)) = (&args.points_csv, &first_artifacts) {
                write_points_csv(path, artifacts)?;
            }
            let med = |f: fn(&RegretReport) -> f64| -> f64 {
                let mut v: Vec<f64> = reports.iter().map(f).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let k = v.len();
                if k % 2 == 1 {
                    v[k / 2]
                } else {
                    0.5 * (v[k / 2 - 1] + v[k / 2])
                }
            };
            let regrets: Vec<f64> = reports.iter().map(|r| r.regret).collect();
            let mean_r = regrets.iter().sum::<f64>() / regrets.len() as f64;
            let var_r = regrets
                .iter()
                .map(|r| (r - mean_r) * (r - mean_r))
                .sum::<f64>()
                / regrets.len() as f64;
            let report = SimulationReport {
                design: match args.design {
                    DesignArg::Circle => "circle",
                    DesignArg::Discrete => "discrete",
                    DesignArg::Pointmass => "pointmass",
                }
                .into(),
                n,
                summary: SimulationSummary {
                    median_mse_raw: med(|r| r.mse_raw),
                    median_mse_eb: med(|r| r.mse_eb),
                    median_mse_oracle: med(|r| r.mse_oracle),
                    median_regret: med(|r| r.regret),
                    se_regret: (var_r / regrets.len() as f64).sqrt(),
                },
                reps: reports,
            };
            serde_json::to_string_pretty(&report)?
        }
    };
    match &args.output {
        Some(path) => std::fs::write(path, report_json + "\n")?,
        None => println!("{report_json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn write_points_csv(path: &PathBuf, artifacts: &npmix::sim::RegretArtifacts) -> Result<()> {
    let p = artifacts.data.dim();
    let mut out = String::from("kind,");
    out.push_str(
        &(1..=p)
            .map(|d| format!("x_{d}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push_str(",weight\n");
    let mut emit = |kind: &str, point: &[f64], weight: Option<f64>| {
        let mut fields = vec![kind.to_string()];
        fields.extend(point.iter().map(|v| fmt17(*v)));
        fields.push(weight.map(fmt17).unwrap_or_default());
        out.push_str(&fields.join(","));
        out.push('\n');
    };
    for (obs, truth) in artifacts.data.iter().zip(&artifacts.truths) {
        emit("raw", obs.x(), None);
        emit("true", truth, None);
    }
    for mean in &artifacts.denoised {
        emit("denoised", mean, None);
    }
    for mean in &artifacts.oracle {
        emit("oracle", mean, None);
    }
    for (atom, &w) in artifacts
        .fitted
        .atoms()
        .iter()
        .zip(artifacts.fitted.weights())
    {
        emit("atom", atom, Some(w));
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct Check {
    name: &'static str,
    passed: Option<bool>,
    detail: String,
}

fn cmd_certify(args: CertifyArgs) -> Result<ExitCode> {
    let parsed = read_input(&args.input)?;
    let data: Dataset = parsed.dataset;
    let model = FittedModelFile::read(&args.model)?;
    if model.dim != data.dim() {
        bail!(
            "model dimension {} does not match input dimension {}",
            model.dim,
            data.dim()
        );
    }
    if model.fitted_l.len() != data.len() {
        bail!(
            "model stores {} fitted likelihoods for {} observations",
            model.fitted_l.len(),
            data.len()
        );
    }
    let mut checks: Vec<Check> = Vec::new();

    let weight_sum: f64 = model.weights.iter().sum();
    checks.push(Check {
        name: "weights-simplex",
        passed: Some(
            (weight_sum - 1.0).abs() <= 1e-9 && model.weights.iter().all(|&w| w >= 0.0),
        ),
        detail: format!("sum deviation {:.3e}", (weight_sum - 1.0).abs()),
    });

    let kernel = kernel_matrix(&data, &model.atoms)?;
    let fitted_log = npmix::kernels::row_log_mixture(&kernel, &model.weights)?;
    let max_rel = fitted_log
        .iter()
        .zip(&model.fitted_l)
        .map(|(lg, &stored)| {
            let recomputed = lg.exp();
            (recomputed - stored).abs() / stored.abs().max(1e-300)
        })
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "fitted-likelihoods",
        passed: Some(max_rel <= 1e-9),
        detail: format!("max relative deviation {max_rel:.3e}"),
    });

    let duals = dual_values(&kernel, &model.weights)?;
    let gap = duals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gap_tol = model.solver.dual_gap_tol;
    checks.push(Check {
        name: "dual-gap",
        passed: Some(gap <= gap_tol + 1e-12),
        detail: format!("recomputed {gap:.3e} vs tolerance {gap_tol:.3e}"),
    });

    let weighted: f64 = model.weights.iter().zip(&duals).map(|(w, d)| w * d).sum();
    checks.push(Check {
        name: "weighted-dual-identity",
        passed: Some(weighted.abs() <= 1e-10),
        detail: format!("sum w_j D_j = {weighted:.3e}"),
    });

    let q = gap.max(0.0).ln_1p();
    let floors = likelihood_floor(&data, q);
    let mut floor_ok = true;
    let mut worst = f64::INFINITY;
    for (lg, floor) in fitted_log.iter().zip(&floors) {
        let ratio = lg.exp() / floor;
        if ratio < worst {
            worst = ratio;
        }
        if lg.exp() < *floor {
            floor_ok = false;
        }
    }
    checks.push(Check {
        name: "likelihood-floor",
        passed: Some(floor_ok),
        detail: format!("min fitted/floor ratio {worst:.3e}"),
    });

    let region = model.region.to_region()?;
    match discretization_bound(data.dim(), data.k_lower(), region.diameter, model.delta) {
        Ok(bound) => checks.push(Check {
            name: "prop1-bound",
            passed: Some(true),
            detail: format!(
                "grid-to-continuous log-likelihood gap at most {bound:.6e} at delta {}",
                model.delta
            ),
        }),
        Err(_) => checks.push(Check {
            name: "prop1-bound",
            passed: None,
            detail: format!(
                "delta {} outside the validity range; no continuous-problem certificate",
                model.delta
            ),
        }),
    }

    let mut any_failed = false;
    for check in &checks {
        let status = match check.passed {
            Some(true) => "PASS",
            Some(false) => {
                any_failed = true;
                "FAIL"
            }
            None => "SKIP",
        };
        println!(
            "{status} {name}: {detail}",
            name = check.name,
            detail = check.detail
        );
    }
    println!("INFO loglik-suboptimality-bound: {:.6e}", gap.max(0.0).ln_1p());
    if any_failed {
        Ok(ExitCode::from(EXIT_CERTIFY))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
