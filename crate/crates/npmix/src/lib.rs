//! Nonparametric maximum likelihood estimation of an arbitrary prior from
//! multivariate, heteroscedastic Gaussian observations.
//!
//! Given observations `X_i ~ N(theta_i, Sigma_i)` with known per-observation
//! covariances and latent means `theta_i` drawn i.i.d. from an unknown prior
//! `G*`, this crate estimates `G*` by maximizing the marginal log-likelihood
//! over all discrete probability measures supported on a data-driven grid,
//! certifies (near-)optimality through the dual mixture density, and produces
//! empirical Bayes posterior-mean denoisers together with evaluation metrics
//! (average squared Hellinger, exact 2-Wasserstein, regret).
//!
//! The crate is organized around the fitting pipeline:
//!
//! 1. [`model`] — observations, covariances, datasets, mixing measures;
//! 2. [`support`] — support regions (hull / bounding box / ball) and grids;
//! 3. [`kernels`] — log-domain Gaussian kernel matrices and mixture evaluation;
//! 4. [`solver`] — simplex-constrained maximum likelihood with certificates;
//! 5. [`ebayes`] — posterior means (direct and Tweedie, optionally regularized);
//! 6. [`metrics`] — Hellinger, Wasserstein and regret;
//! 7. [`sim`] — synthetic designs, oracles and experiment runners.

pub mod ebayes;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod solver;
pub mod support;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}{}", context_suffix(.context))]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("covariance is not positive-definite{}", context_suffix(.context))]
    NotPositiveDefinite { context: &'static str },

    #[error("dataset contains no observations")]
    EmptyDataset,

    #[error("measure has no mass: weights sum to {sum}")]
    ZeroMass { sum: f64 },

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("matrix with rotation part is not orthogonal (max deviation {deviation})")]
    NotOrthogonal { deviation: f64 },

    #[error(
        "row {row}: every weighted kernel value underflowed; the grid misses this observation"
    )]
    AllWeightsOnUnderflowedAtoms { row: usize },

    #[error("row {row}: mixture likelihood is zero; cannot form dual values")]
    ZeroLikelihoodRow { row: usize },

    #[error("grid would contain {atoms} atoms, above the cap of {cap}")]
    GridTooLarge { atoms: usize, cap: usize },

    #[error("delta {delta} outside (0, {max_delta}); discretization bound does not apply")]
    DeltaOutOfRange { delta: f64, max_delta: f64 },

    #[error("all posterior responsibilities underflowed for this observation")]
    AllResponsibilitiesUnderflow,

    #[error("mixture density is zero at the query point; use a regularization policy")]
    ZeroDensity,

    #[error("transport problem has {entries} cost entries, above the cap of {cap}")]
    SizeLimit { entries: usize, cap: usize },

    #[error("length mismatch: {left} vs {right}{}", context_suffix(.context))]
    LengthMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    #[error("operation requires dimension {required}, got {got}: {op}")]
    UnsupportedDimension {
        op: &'static str,
        required: usize,
        got: usize,
    },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub(crate) fn at_row(self, row: usize) -> Error {
        Error::Row {
            row,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
