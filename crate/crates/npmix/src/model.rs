//! Domain types: covariances, observations, datasets, discrete mixing
//! measures, and affine transformations of all of the above.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::{Error, Result};

/// Absolute tolerance for the weight simplex.
pub const WEIGHT_SIMPLEX_TOL: f64 = 1e-12;

/// Orthogonality tolerance for affine maps.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Relative factor defining when two atoms are "the same" point:
/// atoms closer than this times the diameter of the atom set are merged.
pub const ATOM_MERGE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
enum CovKind {
    Isotropic(f64),
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

/// A known error covariance, stored in one of three tiers.
///
/// Isotropic and diagonal covariances use elementwise fast paths; full
/// matrices are validated and solved through their Cholesky factor. The
/// constructor is the positive-definiteness check: a value of this type
/// always has finite spectral bounds `0 < lambda_min <= lambda_max`.
#[derive(Debug, Clone)]
pub struct CovarianceSpec {
    kind: CovKind,
    dim: usize,
    log_det: f64,
    lambda_min: f64,
    lambda_max: f64,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl PartialEq for CovarianceSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl CovarianceSpec {
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                context: "isotropic variance must be a positive finite real",
            });
        }
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
                context: "covariance dimension",
            });
        }
        Ok(Self {
            kind: CovKind::Isotropic(variance),
            dim,
            log_det: dim as f64 * variance.ln(),
            lambda_min: variance,
            lambda_max: variance,
            chol: None,
        })
    }

    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
                context: "covariance dimension",
            });
        }
        if variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NotPositiveDefinite {
                context: "every diagonal variance must be a positive finite real",
            });
        }
        let log_det = variances.iter().map(|v| v.ln()).sum();
        let lambda_min = variances.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda_max = variances.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            dim: variances.len(),
            kind: CovKind::Diagonal(variances),
            log_det,
            lambda_min,
            lambda_max,
            chol: None,
        })
    }

    /// Builds a full covariance from its dense symmetric matrix. The matrix
    /// must admit a Cholesky factorization.
    pub fn full(matrix: DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim == 0 || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim.max(1),
                got: matrix.ncols(),
                context: "covariance matrix must be square and non-empty",
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                context: "covariance contains non-finite entries",
            });
        }
        let sym_dev = (0..dim)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (matrix[(i, j)] - matrix[(j, i)]).abs())
            .fold(0.0, f64::max);
        let scale = matrix.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        if sym_dev > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite {
                context: "covariance matrix is not symmetric",
            });
        }
        let chol = Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite {
            context: "Cholesky factorization failed",
        })?;
        let log_det = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let eigen = matrix.clone().symmetric_eigen();
        let lambda_min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda_max = eigen.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lambda_min <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                context: "non-positive eigenvalue",
            });
        }
        Ok(Self {
            kind: CovKind::Full(matrix),
            dim,
            log_det,
            lambda_min,
            lambda_max,
            chol: Some(chol),
        })
    }

    /// Builds a full covariance from its lower triangle in row-major order:
    /// `[c11, c21, c22, c31, c32, c33, ...]`.
    pub fn full_from_lower(dim: usize, lower: &[f64]) -> Result<Self> {
        let expected = dim * (dim + 1) / 2;
        if lower.len() != expected {
            return Err(Error::LengthMismatch {
                left: lower.len(),
                right: expected,
                context: "lower-triangle covariance entries",
            });
        }
        let mut matrix = DMatrix::zeros(dim, dim);
        let mut k = 0;
        for i in 0..dim {
            for j in 0..=i {
                matrix[(i, j)] = lower[k];
                matrix[(j, i)] = lower[k];
                k += 1;
            }
        }
        Self::full(matrix)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `log det(Sigma)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.kind, CovKind::Isotropic(_) | CovKind::Diagonal(_))
    }

    /// Quadratic form `d^T Sigma^{-1} d`.
    pub fn quad_form(&self, d: &[f64]) -> f64 {
        debug_assert_eq!(d.len(), self.dim);
        match &self.kind {
            CovKind::Isotropic(v) => d.iter().map(|x| x * x).sum::<f64>() / v,
            CovKind::Diagonal(vars) => d.iter().zip(vars).map(|(x, v)| x * x / v).sum(),
            CovKind::Full(_) => {
                let chol = self.chol.as_ref().expect("full covariance has factor");
                // solve L y = d, then |y|^2 = d^T Sigma^{-1} d
                let mut y = nalgebra::DVector::from_column_slice(d);
                chol.l_dirty().solve_lower_triangular_mut(&mut y);
                y.norm_squared()
            }
        }
    }

    /// `Sigma^{-1} d`.
    pub fn solve(&self, d: &[f64]) -> Vec<f64> {
        debug_assert_eq!(d.len(), self.dim);
        match &self.kind {
            CovKind::Isotropic(v) => d.iter().map(|x| x / v).collect(),
            CovKind::Diagonal(vars) => d.iter().zip(vars).map(|(x, v)| x / v).collect(),
            CovKind::Full(_) => {
                let chol = self.chol.as_ref().expect("full covariance has factor");
                let sol = chol.solve(&nalgebra::DVector::from_column_slice(d));
                sol.as_slice().to_vec()
            }
        }
    }

    /// `Sigma v` (matrix-vector product with the covariance itself).
    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        match &self.kind {
            CovKind::Isotropic(s) => v.iter().map(|x| x * s).collect(),
            CovKind::Diagonal(vars) => v.iter().zip(vars).map(|(x, s)| x * s).collect(),
            CovKind::Full(mat) => {
                let out = mat * nalgebra::DVector::from_column_slice(v);
                out.as_slice().to_vec()
            }
        }
    }

    /// `Sigma^{1/2} z`, used to draw correlated noise from standard normals.
    pub fn sqrt_mul(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.dim);
        match &self.kind {
            CovKind::Isotropic(v) => {
                let s = v.sqrt();
                z.iter().map(|x| x * s).collect()
            }
            CovKind::Diagonal(vars) => z
                .iter()
                .zip(vars)
                .map(|(x, v)| x * v.sqrt())
                .collect(),
            CovKind::Full(_) => {
                let chol = self.chol.as_ref().expect("full covariance has factor");
                let out = chol.l() * nalgebra::DVector::from_column_slice(z);
                out.as_slice().to_vec()
            }
        }
    }

    /// Dense materialization of the covariance matrix.
    pub fn materialize(&self) -> DMatrix<f64> {
        match &self.kind {
            CovKind::Isotropic(v) => DMatrix::identity(self.dim, self.dim) * *v,
            CovKind::Diagonal(vars) => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(vars))
            }
            CovKind::Full(mat) => mat.clone(),
        }
    }

    /// Conjugation `U Sigma U^T` by an orthogonal matrix. The result is
    /// downcast back to the diagonal or isotropic tier when the rotated
    /// matrix is numerically diagonal.
    pub fn rotate(&self, rotation: &DMatrix<f64>) -> Result<Self> {
        if rotation.nrows() != self.dim || rotation.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: rotation.nrows(),
                context: "rotation applied to covariance",
            });
        }
        if matches!(self.kind, CovKind::Isotropic(_)) {
            // U sigma^2 I U^T = sigma^2 I exactly.
            return Ok(self.clone());
        }
        let mat = rotation * self.materialize() * rotation.transpose();
        let scale = mat.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let off_diag_max = (0..self.dim)
            .flat_map(|i| (0..self.dim).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| mat[(i, j)].abs())
            .fold(0.0, f64::max);
        if off_diag_max <= 1e-14 * scale {
            let diag: Vec<f64> = (0..self.dim).map(|i| mat[(i, i)]).collect();
            return Self::diagonal(diag);
        }
        // Symmetrize to absorb round-off before the SPD check.
        let sym = (&mat + mat.transpose()) * 0.5;
        Self::full(sym)
    }
}

/// One data point: a measurement vector and its known error covariance.
#[derive(Debug, Clone)]
pub struct Observation {
    x: Vec<f64>,
    sigma: CovarianceSpec,
}

impl Observation {
    pub fn new(x: Vec<f64>, sigma: CovarianceSpec) -> Result<Self> {
        if x.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                got: x.len(),
                context: "observation vector vs covariance",
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                got: x.len(),
                context: "observation vector contains non-finite entries",
            });
        }
        Ok(Self { x, sigma })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn sigma(&self) -> &CovarianceSpec {
        &self.sigma
    }
}

/// A validated collection of observations sharing one dimension, with cached
/// spectral bounds `k_lower = min_i lambda_min(Sigma_i)` and
/// `k_upper = max_i lambda_max(Sigma_i)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    observations: Vec<Observation>,
    dim: usize,
    k_lower: f64,
    k_upper: f64,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = observations[0].x.len();
        for (i, obs) in observations.iter().enumerate() {
            if obs.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: obs.x.len(),
                    context: "ragged observation vectors",
                }
                .at_row(i));
            }
        }
        let k_lower = observations
            .iter()
            .map(|o| o.sigma.lambda_min())
            .fold(f64::INFINITY, f64::min);
        let k_upper = observations
            .iter()
            .map(|o| o.sigma.lambda_max())
            .fold(0.0, f64::max);
        Ok(Self {
            observations,
            dim,
            k_lower,
            k_upper,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_lower(&self) -> f64 {
        self.k_lower
    }

    pub fn k_upper(&self) -> f64 {
        self.k_upper
    }

    pub fn obs(&self, i: usize) -> &Observation {
        &self.observations[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }
}

/// Validates raw observations into a [`Dataset`]. Idempotent.
pub fn validate_dataset(observations: Vec<Observation>) -> Result<Dataset> {
    Dataset::new(observations)
}

/// A discrete probability measure: atoms in `R^p` with simplex weights.
///
/// Construction renormalizes the weights (recording the deviation from unit
/// mass), drops zero-weight atoms, and merges atoms closer than
/// `ATOM_MERGE_REL_TOL` times the diameter of the atom set.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
    dim: usize,
    weight_deviation: f64,
}

impl MixingMeasure {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: atoms.len(),
                right: weights.len(),
                context: "atoms vs weights",
            });
        }
        if atoms.is_empty() {
            return Err(Error::ZeroMass { sum: 0.0 });
        }
        let dim = atoms[0].len();
        for a in &atoms {
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.len(),
                    context: "ragged atoms",
                });
            }
        }
        for (index, &w) in weights.iter().enumerate() {
            if w < -WEIGHT_SIMPLEX_TOL || !w.is_finite() {
                return Err(Error::NegativeWeight { index, value: w });
            }
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::ZeroMass { sum });
        }
        let weight_deviation = (sum - 1.0).abs();

        // Merge near-duplicate atoms; tolerance scales with the support size.
        let diameter = atom_set_diameter(&atoms);
        let merge_tol = ATOM_MERGE_REL_TOL * diameter;
        let mut kept_atoms: Vec<Vec<f64>> = Vec::with_capacity(atoms.len());
        let mut kept_weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (a, &w) in atoms.iter().zip(&weights) {
            let w = w.max(0.0);
            if w == 0.0 {
                continue;
            }
            match kept_atoms
                .iter()
                .position(|b| euclidean(a, b) <= merge_tol)
            {
                Some(k) => kept_weights[k] += w,
                None => {
                    kept_atoms.push(a.clone());
                    kept_weights.push(w);
                }
            }
        }
        if kept_atoms.is_empty() {
            return Err(Error::ZeroMass { sum });
        }
        let total: f64 = kept_weights.iter().sum();
        for w in &mut kept_weights {
            *w /= total;
        }
        Ok(Self {
            atoms: kept_atoms,
            weights: kept_weights,
            dim,
            weight_deviation,
        })
    }

    /// Point mass at `point`.
    pub fn dirac(point: Vec<f64>) -> Self {
        let dim = point.len();
        Self {
            atoms: vec![point],
            weights: vec![1.0],
            dim,
            weight_deviation: 0.0,
        }
    }

    /// Uniform weights over the given atoms.
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0 / atoms.len().max(1) as f64; atoms.len()];
        Self::new(atoms, w)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total-mass deviation of the raw weights before renormalization.
    pub fn weight_deviation(&self) -> f64 {
        self.weight_deviation
    }

    /// Mean of the measure.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            for (o, &ai) in out.iter_mut().zip(a) {
                *o += w * ai;
            }
        }
        out
    }
}

/// A rigid affine map `x -> U x + x0` with `U` orthogonal.
#[derive(Debug, Clone)]
pub struct AffineMap {
    rotation: DMatrix<f64>,
    shift: Vec<f64>,
    is_identity_rotation: bool,
}

impl AffineMap {
    pub fn new(rotation: DMatrix<f64>, shift: Vec<f64>) -> Result<Self> {
        let p = shift.len();
        if rotation.nrows() != p || rotation.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: rotation.nrows(),
                context: "rotation vs shift",
            });
        }
        let gram = rotation.transpose() * &rotation;
        let eye = DMatrix::identity(p, p);
        let deviation = (&gram - &eye).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if deviation > ORTHOGONALITY_TOL {
            return Err(Error::NotOrthogonal { deviation });
        }
        let is_identity_rotation = (&rotation - &eye)
            .iter()
            .all(|v| *v == 0.0);
        Ok(Self {
            rotation,
            shift,
            is_identity_rotation,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            rotation: DMatrix::identity(dim, dim),
            shift: vec![0.0; dim],
            is_identity_rotation: true,
        }
    }

    pub fn translation(shift: Vec<f64>) -> Self {
        let dim = shift.len();
        Self {
            rotation: DMatrix::identity(dim, dim),
            shift,
            is_identity_rotation: true,
        }
    }

    /// Planar rotation by `angle` radians (2-dimensional maps only).
    pub fn rotation_2d(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let rotation = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        Self {
            is_identity_rotation: rotation == DMatrix::identity(2, 2),
            rotation,
            shift: vec![0.0, 0.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// Applies `x -> U x + x0`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
                context: "affine map input",
            });
        }
        if self.is_identity_rotation {
            return Ok(x.iter().zip(&self.shift).map(|(a, b)| a + b).collect());
        }
        let y = &self.rotation * nalgebra::DVector::from_column_slice(x);
        Ok(y
            .as_slice()
            .iter()
            .zip(&self.shift)
            .map(|(a, b)| a + b)
            .collect())
    }
}

/// Pushforward of a measure under an affine map: atoms move, weights stay.
pub fn pushforward(measure: &MixingMeasure, map: &AffineMap) -> Result<MixingMeasure> {
    if measure.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: measure.dim(),
            context: "pushforward",
        });
    }
    let atoms = measure
        .atoms
        .iter()
        .map(|a| map.apply(a))
        .collect::<Result<Vec<_>>>()?;
    Ok(MixingMeasure {
        atoms,
        weights: measure.weights.clone(),
        dim: measure.dim,
        weight_deviation: measure.weight_deviation,
    })
}

/// Transforms a dataset: `X_i' = U X_i + x0`, `Sigma_i' = U Sigma_i U^T`.
/// Spectral bounds are preserved.
pub fn transform_dataset(data: &Dataset, map: &AffineMap) -> Result<Dataset> {
    if data.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: data.dim(),
            context: "transform_dataset",
        });
    }
    let observations = data
        .iter()
        .map(|obs| {
            let x = map.apply(obs.x())?;
            let sigma = if map.is_identity_rotation {
                obs.sigma().clone()
            } else {
                obs.sigma().rotate(&map.rotation)?
            };
            Observation::new(x, sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(observations)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn atom_set_diameter(atoms: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in atoms.iter().enumerate() {
        for b in &atoms[i + 1..] {
            d = d.max(euclidean(a, b));
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lemma2_points() -> Vec<Vec<f64>> {
        let h = 3f64.sqrt() / 2.0;
        vec![vec![0.0, 1.0], vec![h, -0.5], vec![-h, -0.5]]
    }

    #[test]
    fn identity_covariance_bounds() {
        let sigma = CovarianceSpec::isotropic(2, 1.0).unwrap();
        let obs = Observation::new(vec![0.0, 0.0], sigma).unwrap();
        let data = Dataset::new(vec![obs]).unwrap();
        assert_eq!(data.k_lower(), 1.0);
        assert_eq!(data.k_upper(), 1.0);
    }

    #[test]
    fn diagonal_spectral_bounds_match_figure_four_noise() {
        let sigma = CovarianceSpec::diagonal(vec![5.0, 0.05]).unwrap();
        let obs = Observation::new(vec![0.0, 1.0], sigma).unwrap();
        let data = Dataset::new(vec![obs]).unwrap();
        assert_eq!(data.k_lower(), 0.05);
        assert_eq!(data.k_upper(), 5.0);
    }

    #[test]
    fn indefinite_full_matrix_rejected() {
        // Eigenvalues {3, -1}.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            CovarianceSpec::full(m),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn full_covariance_solve_and_quad_form_agree() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let sigma = CovarianceSpec::full(m.clone()).unwrap();
        let d = [0.3, -1.2];
        let solved = sigma.solve(&d);
        let qf = sigma.quad_form(&d);
        let direct = d[0] * solved[0] + d[1] * solved[1];
        assert_relative_eq!(qf, direct, max_relative = 1e-12);
        let back = sigma.mul(&solved);
        assert_relative_eq!(back[0], d[0], epsilon = 1e-12);
        assert_relative_eq!(back[1], d[1], epsilon = 1e-12);
        assert_relative_eq!(sigma.log_det(), (2.0f64 * 1.0 - 0.25).ln(), epsilon = 1e-12);
    }

    #[test]
    fn validate_rejects_ragged_and_empty() {
        assert!(matches!(validate_dataset(vec![]), Err(Error::EmptyDataset)));
        let a = Observation::new(vec![0.0, 0.0], CovarianceSpec::isotropic(2, 1.0).unwrap())
            .unwrap();
        let b =
            Observation::new(vec![0.0], CovarianceSpec::isotropic(1, 1.0).unwrap()).unwrap();
        assert!(validate_dataset(vec![a, b]).is_err());
    }

    #[test]
    fn validate_is_idempotent() {
        let obs = vec![
            Observation::new(vec![0.0, 1.0], CovarianceSpec::diagonal(vec![5.0, 0.05]).unwrap())
                .unwrap(),
            Observation::new(vec![1.0, 0.0], CovarianceSpec::isotropic(2, 0.5).unwrap()).unwrap(),
        ];
        let d1 = validate_dataset(obs).unwrap();
        let d2 = validate_dataset(d1.observations.clone()).unwrap();
        assert_eq!(d1.k_lower(), d2.k_lower());
        assert_eq!(d1.k_upper(), d2.k_upper());
        assert_eq!(d1.len(), d2.len());
    }

    #[test]
    fn measure_renormalizes_and_merges() {
        let m = MixingMeasure::new(
            vec![vec![0.0, 0.0], vec![0.0, 1e-16], vec![1.0, 0.0]],
            vec![0.25, 0.25, 0.5 + 1e-13],
        )
        .unwrap();
        // First two atoms merge (closer than 1e-9 * diameter).
        assert_eq!(m.len(), 2);
        assert_relative_eq!(m.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(m.weights()[0], 0.5, epsilon = 1e-12);
        assert!(m.weight_deviation() <= 2e-13);
    }

    #[test]
    fn measure_rejects_negative_weight() {
        let err = MixingMeasure::new(vec![vec![0.0]], vec![-0.5]);
        assert!(matches!(err, Err(Error::NegativeWeight { .. })));
    }

    #[test]
    fn pushforward_shift_moves_atoms_only() {
        let g = MixingMeasure::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0.25, 0.75])
            .unwrap();
        let t = AffineMap::translation(vec![1.0, 0.0]);
        let gt = pushforward(&g, &t).unwrap();
        assert_eq!(gt.atoms()[0], vec![1.0, 0.0]);
        assert_eq!(gt.atoms()[1], vec![2.0, 1.0]);
        assert_eq!(gt.weights(), g.weights());
        assert_eq!(gt.weights().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn pushforward_identity_is_identity() {
        let g = MixingMeasure::uniform(lemma2_points()).unwrap();
        let gt = pushforward(&g, &AffineMap::identity(2)).unwrap();
        assert_eq!(g.atoms(), gt.atoms());
        assert_eq!(g.weights(), gt.weights());
    }

    #[test]
    fn pushforward_quarter_turn() {
        let g = MixingMeasure::dirac(vec![1.0, 0.0]);
        let r = AffineMap::rotation_2d(std::f64::consts::FRAC_PI_2);
        let gt = pushforward(&g, &r).unwrap();
        assert_relative_eq!(gt.atoms()[0][0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(gt.atoms()[0][1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn transform_pure_shift_keeps_covariances() {
        let obs = Observation::new(vec![0.5, -0.5], CovarianceSpec::diagonal(vec![5.0, 0.05]).unwrap())
            .unwrap();
        let data = Dataset::new(vec![obs]).unwrap();
        let t = AffineMap::translation(vec![2.0, 3.0]);
        let moved = transform_dataset(&data, &t).unwrap();
        assert_eq!(moved.obs(0).x(), &[2.5, 2.5]);
        assert_eq!(moved.obs(0).sigma(), data.obs(0).sigma());
    }

    #[test]
    fn transform_quarter_turn_permutes_diagonal() {
        let obs = Observation::new(vec![1.0, 0.0], CovarianceSpec::diagonal(vec![5.0, 0.05]).unwrap())
            .unwrap();
        let data = Dataset::new(vec![obs]).unwrap();
        let r = AffineMap::rotation_2d(std::f64::consts::FRAC_PI_2);
        let moved = transform_dataset(&data, &r).unwrap();
        let mat = moved.obs(0).sigma().materialize();
        assert_relative_eq!(mat[(0, 0)], 0.05, epsilon = 1e-10);
        assert_relative_eq!(mat[(1, 1)], 5.0, epsilon = 1e-10);
        assert_relative_eq!(mat[(0, 1)], 0.0, epsilon = 1e-10);
        // Spectral bounds preserved.
        assert_relative_eq!(moved.k_lower(), data.k_lower(), epsilon = 1e-12);
        assert_relative_eq!(moved.k_upper(), data.k_upper(), epsilon = 1e-12);
    }

    #[test]
    fn composed_map_is_isometry_on_lemma2_points() {
        let pts = lemma2_points();
        let obs: Vec<Observation> = pts
            .iter()
            .map(|x| {
                Observation::new(x.clone(), CovarianceSpec::isotropic(2, 0.54).unwrap()).unwrap()
            })
            .collect();
        let data = Dataset::new(obs).unwrap();
        let mut map = AffineMap::rotation_2d(0.7);
        map.shift = vec![1.5, -2.0];
        let moved = transform_dataset(&data, &map).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let before = euclidean(data.obs(i).x(), data.obs(j).x());
                let after = euclidean(moved.obs(i).x(), moved.obs(j).x());
                assert_relative_eq!(before, after, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn affine_map_rejects_nonorthogonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            AffineMap::new(m, vec![0.0, 0.0]),
            Err(Error::NotOrthogonal { .. })
        ));
    }
}
