//! Synthetic data designs with known priors, oracle posterior means, and
//! experiment runners for regret and Wasserstein-trend studies.
//!
//! All randomness flows through one counter-style generator keyed by
//! `(seed, purpose, index)`, so experiments are reproducible and individual
//! draws are independent of evaluation order.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ebayes::{denoise, posterior_mean_direct, RegularizationPolicy};
use crate::kernels::kernel_matrix;
use crate::metrics::w2_to_point_mass;
use crate::model::{CovarianceSpec, Dataset, MixingMeasure, Observation};
use crate::solver::{solve_weights, SolverConfig};
use crate::support::{auto_grid, build_grid_capped, support_region, RegionMode};
use crate::{Error, Result};

/// Prior designs for synthetic experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PriorSpec {
    /// Uniform distribution on a centered circle; the oracle is computed on
    /// a fine discretization with `n_oracle_atoms` points.
    Circle { radius: f64, n_oracle_atoms: usize },
    /// A known discrete prior.
    Discrete { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
    /// A single point mass.
    PointMass { mu: Vec<f64> },
}

impl PriorSpec {
    pub fn circle(radius: f64) -> Self {
        PriorSpec::Circle {
            radius,
            n_oracle_atoms: 2048,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::Circle { .. } => 2,
            PriorSpec::Discrete { atoms, .. } => atoms.first().map_or(0, |a| a.len()),
            PriorSpec::PointMass { mu } => mu.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::Circle {
                radius,
                n_oracle_atoms,
            } => {
                if !(*radius > 0.0) || *n_oracle_atoms < 64 {
                    return Err(Error::LengthMismatch {
                        left: *n_oracle_atoms,
                        right: 64,
                        context: "circle prior needs radius > 0 and at least 64 oracle atoms",
                    });
                }
                Ok(())
            }
            PriorSpec::Discrete { atoms, weights } => {
                MixingMeasure::new(atoms.clone(), weights.clone()).map(|_| ())
            }
            PriorSpec::PointMass { mu } => {
                if mu.is_empty() {
                    Err(Error::EmptyDataset)
                } else {
                    Ok(())
                }
            }
        }
    }

    /// The prior as a discrete measure (the circle is discretized).
    pub fn as_measure(&self) -> Result<MixingMeasure> {
        match self {
            PriorSpec::Circle {
                radius,
                n_oracle_atoms,
            } => {
                let k = *n_oracle_atoms;
                let atoms: Vec<Vec<f64>> = (0..k)
                    .map(|j| {
                        let angle = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / k as f64;
                        vec![radius * angle.cos(), radius * angle.sin()]
                    })
                    .collect();
                MixingMeasure::uniform(atoms)
            }
            PriorSpec::Discrete { atoms, weights } => {
                MixingMeasure::new(atoms.clone(), weights.clone())
            }
            PriorSpec::PointMass { mu } => Ok(MixingMeasure::dirac(mu.clone())),
        }
    }
}

/// Noise designs: independent uniform diagonal variances per coordinate and
/// observation, or a fixed cycle of covariances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NoiseSpec {
    DiagUniform { low: f64, high: f64 },
    FixedIsotropic { variance: f64 },
}

impl NoiseSpec {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            NoiseSpec::DiagUniform { low, high } => *low > 0.0 && low <= high,
            NoiseSpec::FixedIsotropic { variance } => *variance > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite {
                context: "noise variances must be positive with low <= high",
            })
        }
    }
}

mod purpose {
    pub const PRIOR: u64 = 1;
    pub const NOISE_COV: u64 = 2;
    pub const NOISE_DRAW: u64 = 3;
}

fn keyed_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(&0xd1b5_4a32_d192_ed03u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Draws `n` latent means from the prior, per-observation covariances from
/// the noise design, and observations `X_i = theta_i + Sigma_i^{1/2} Z_i`.
/// Fully determined by `seed`.
pub fn generate(
    prior: &PriorSpec,
    noise: &NoiseSpec,
    n: usize,
    seed: u64,
) -> Result<(Dataset, Vec<Vec<f64>>)> {
    prior.validate()?;
    noise.validate()?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let p = prior.dim();
    let mut truths = Vec::with_capacity(n);
    let mut observations = Vec::with_capacity(n);
    for i in 0..n {
        let theta = match prior {
            PriorSpec::Circle { radius, .. } => {
                let mut rng = keyed_rng(seed, purpose::PRIOR, i as u64);
                let angle: f64 = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
                vec![radius * angle.cos(), radius * angle.sin()]
            }
            PriorSpec::Discrete { atoms, weights } => {
                let mut rng = keyed_rng(seed, purpose::PRIOR, i as u64);
                let mut u: f64 = rng.gen::<f64>() * weights.iter().sum::<f64>();
                let mut pick = atoms.len() - 1;
                for (j, &w) in weights.iter().enumerate() {
                    if u < w {
                        pick = j;
                        break;
                    }
                    u -= w;
                }
                atoms[pick].clone()
            }
            PriorSpec::PointMass { mu } => mu.clone(),
        };
        let sigma = match noise {
            NoiseSpec::DiagUniform { low, high } => {
                let mut rng = keyed_rng(seed, purpose::NOISE_COV, i as u64);
                let vars: Vec<f64> = (0..p)
                    .map(|_| {
                        if high > low {
                            rng.gen_range(*low..*high)
                        } else {
                            *low
                        }
                    })
                    .collect();
                CovarianceSpec::diagonal(vars)?
            }
            NoiseSpec::FixedIsotropic { variance } => CovarianceSpec::isotropic(p, *variance)?,
        };
        let mut rng = keyed_rng(seed, purpose::NOISE_DRAW, i as u64);
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let noise_vec = sigma.sqrt_mul(&z);
        let x: Vec<f64> = theta.iter().zip(&noise_vec).map(|(t, e)| t + e).collect();
        observations.push(Observation::new(x, sigma)?);
        truths.push(theta);
    }
    Ok((Dataset::new(observations)?, truths))
}

/// Oracle posterior means under the true prior. Discrete and point-mass
/// priors are exact; the circle prior uses its fine discretization.
pub fn oracle_posterior_means(
    data: &Dataset,
    prior: &PriorSpec,
    policy: Option<&RegularizationPolicy>,
) -> Result<Vec<Vec<f64>>> {
    let measure = prior.as_measure()?;
    match policy {
        Some(policy) => {
            let out = denoise(data, &measure, policy)?;
            Ok(out.into_iter().map(|s| s.mean).collect())
        }
        None => data
            .iter()
            .map(|obs| {
                posterior_mean_direct(obs.x(), obs.sigma(), &measure).map(|s| s.mean)
            })
            .collect(),
    }
}

/// Configuration for one regret replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegretConfig {
    pub prior: PriorSpec,
    pub noise: NoiseSpec,
    pub n: usize,
    pub seed: u64,
    /// Grid width override; chosen from the discretization bound if absent.
    pub delta: Option<f64>,
    pub grid_cap: usize,
    pub dual_gap_tol: f64,
    pub max_iters: usize,
    /// Regularization level; `(2 pi)^{-p/2} / n` if absent.
    pub rho: Option<f64>,
}

impl RegretConfig {
    pub fn new(prior: PriorSpec, noise: NoiseSpec, n: usize, seed: u64) -> Self {
        Self {
            prior,
            noise,
            n,
            seed,
            delta: None,
            grid_cap: 40_000,
            dual_gap_tol: 1e-6,
            max_iters: 20_000,
            rho: None,
        }
    }
}

/// One simulation report row; the JSON schema consumed by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegretReport {
    pub config: RegretConfig,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub mse_raw: f64,
    pub mse_eb: f64,
    pub mse_oracle: f64,
    pub regret: f64,
    pub loglik: f64,
    pub dual_gap: f64,
    pub atoms_kept: usize,
    pub wall_ms: u64,
}

/// Everything a replication produced, for callers that need the artifacts
/// (plots, further metrics) in addition to the scalar report.
pub struct RegretArtifacts {
    pub report: RegretReport,
    pub data: Dataset,
    pub truths: Vec<Vec<f64>>,
    pub fitted: MixingMeasure,
    pub denoised: Vec<Vec<f64>>,
    pub oracle: Vec<Vec<f64>>,
}

fn mean_sq_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
        })
        .sum::<f64>()
        / a.len() as f64
}

/// Generates, fits, denoises and scores one replication.
pub fn run_regret_experiment(config: &RegretConfig) -> Result<RegretArtifacts> {
    let start = Instant::now();
    let (data, truths) = generate(&config.prior, &config.noise, config.n, config.seed)?;
    let region = support_region(&data, RegionMode::Auto);
    let grid = match config.delta {
        Some(delta) => build_grid_capped(&region, delta, config.grid_cap)?,
        None => auto_grid(&region, &data, config.grid_cap)?.0,
    };
    let kernel = kernel_matrix(&data, &grid.atoms)?;
    let solver = SolverConfig {
        dual_gap_tol: config.dual_gap_tol,
        max_iters: config.max_iters,
        ..SolverConfig::default()
    };
    let fit = solve_weights(&kernel, &solver)?;
    let fitted = MixingMeasure::new(grid.atoms.clone(), fit.weights.clone())?;
    let policy = match config.rho {
        Some(rho) => RegularizationPolicy::new(rho)?,
        None => RegularizationPolicy::default_for(data.dim(), data.len()),
    };
    let denoised: Vec<Vec<f64>> = denoise(&data, &fitted, &policy)?
        .into_iter()
        .map(|s| s.mean)
        .collect();
    let oracle = oracle_posterior_means(&data, &config.prior, Some(&policy))?;
    let raw: Vec<Vec<f64>> = data.iter().map(|o| o.x().to_vec()).collect();
    let report = RegretReport {
        config: config.clone(),
        seed: config.seed,
        n: config.n,
        p: data.dim(),
        mse_raw: mean_sq_dist(&raw, &truths),
        mse_eb: mean_sq_dist(&denoised, &truths),
        mse_oracle: mean_sq_dist(&oracle, &truths),
        regret: mean_sq_dist(&denoised, &oracle),
        loglik: fit.certificate.loglik,
        dual_gap: fit.certificate.dual_gap,
        atoms_kept: fitted.len(),
        wall_ms: start.elapsed().as_millis() as u64,
    };
    Ok(RegretArtifacts {
        report,
        data,
        truths,
        fitted,
        denoised,
        oracle,
    })
}

/// Configuration of the Wasserstein trend experiment for a point-mass prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct W2TrendConfig {
    pub mu: Vec<f64>,
    pub noise: NoiseSpec,
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    pub grid_cap: usize,
    pub dual_gap_tol: f64,
    pub max_iters: usize,
    pub delta: Option<f64>,
}

impl W2TrendConfig {
    pub fn new(mu: Vec<f64>, noise: NoiseSpec, n_list: Vec<usize>, seeds: Vec<u64>) -> Self {
        Self {
            mu,
            noise,
            n_list,
            seeds,
            grid_cap: 40_000,
            dual_gap_tol: 1e-6,
            max_iters: 20_000,
            delta: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct W2TrendPoint {
    pub n: usize,
    pub w2_values: Vec<f64>,
    pub median_w2: f64,
    pub support_in_region: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct W2TrendReport {
    pub config: W2TrendConfig,
    pub points: Vec<W2TrendPoint>,
    /// Least-squares slope of `log median_w2` against `log n`.
    pub loglog_slope: f64,
}

/// Fits the point-mass design across sample sizes and seeds and reports the
/// per-size medians of `W_2(G_hat, delta_mu)` with their log-log slope.
pub fn run_w2_trend(config: &W2TrendConfig) -> Result<W2TrendReport> {
    let prior = PriorSpec::PointMass {
        mu: config.mu.clone(),
    };
    let mut points = Vec::with_capacity(config.n_list.len());
    for &n in &config.n_list {
        let mut values = Vec::with_capacity(config.seeds.len());
        let mut support_ok = true;
        for &seed in &config.seeds {
            let (data, _) = generate(&prior, &config.noise, n, seed)?;
            let region = support_region(&data, RegionMode::Ball);
            let grid = match config.delta {
                Some(delta) => build_grid_capped(&region, delta, config.grid_cap)?,
                None => auto_grid(&region, &data, config.grid_cap)?.0,
            };
            let kernel = kernel_matrix(&data, &grid.atoms)?;
            let solver = SolverConfig {
                dual_gap_tol: config.dual_gap_tol,
                max_iters: config.max_iters,
                ..SolverConfig::default()
            };
            let fit = solve_weights(&kernel, &solver)?;
            let fitted = MixingMeasure::new(grid.atoms.clone(), fit.weights)?;
            for atom in fitted.atoms() {
                // grid corners may protrude up to one cell past the ball
                if region.distance(atom) > grid.delta * (data.dim() as f64).sqrt() + 1e-9 {
                    support_ok = false;
                }
            }
            values.push(w2_to_point_mass(&fitted, &config.mu));
        }
        let median = median(&mut values.clone());
        points.push(W2TrendPoint {
            n,
            w2_values: values,
            median_w2: median,
            support_in_region: support_ok,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median_w2.max(1e-300).ln()).collect();
    let loglog_slope = least_squares_slope(&xs, &ys);
    Ok(W2TrendReport {
        config: config.clone(),
        points,
        loglog_slope,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = values.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
