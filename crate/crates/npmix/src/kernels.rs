//! Numerically stable evaluation of Gaussian log-densities, the n x m
//! log-kernel matrix consumed by the solver, and mixture likelihoods and
//! gradients.
//!
//! All kernel storage is in log space; densities are exponentiated only
//! inside ratio computations, where a per-row shift by the row maximum keeps
//! every intermediate in a safe range.

use rayon::prelude::*;

use crate::model::{CovarianceSpec, Dataset, MixingMeasure};
use crate::{Error, Result};

pub(crate) const LOG_2PI: f64 = 1.8378770664093453;

/// Log-density of `N(mean, sigma)` at `x`.
///
/// Computed as `-1/2 log det(2 pi Sigma) - 1/2 (x-mean)^T Sigma^{-1} (x-mean)`
/// with a Cholesky solve for full covariances and elementwise fast paths for
/// the diagonal tiers.
pub fn log_gauss(x: &[f64], mean: &[f64], sigma: &CovarianceSpec) -> Result<f64> {
    let p = sigma.dim();
    if x.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x.len(),
            context: "log_gauss point",
        });
    }
    if mean.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: mean.len(),
            context: "log_gauss mean",
        });
    }
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    Ok(-0.5 * (p as f64 * LOG_2PI + sigma.log_det()) - 0.5 * sigma.quad_form(&diff))
}

/// The n x m matrix of log kernel values `log phi_{Sigma_i}(X_i - a_j)`,
/// stored row-major with cached per-row maxima.
#[derive(Debug, Clone)]
pub struct LogKernelMatrix {
    entries: Vec<f64>,
    n: usize,
    m: usize,
    row_max: Vec<f64>,
}

impl LogKernelMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn row_max(&self) -> &[f64] {
        &self.row_max
    }

    /// Materializes the shifted kernel `E[i][j] = exp(K[i][j] - row_max[i])`;
    /// every row then has maximum exactly 1.
    pub(crate) fn shifted_exp(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.entries.len()];
        e.par_chunks_mut(self.m)
            .zip(self.entries.par_chunks(self.m))
            .zip(&self.row_max)
            .for_each(|((out, row), &rm)| {
                for (o, &k) in out.iter_mut().zip(row) {
                    *o = (k - rm).exp();
                }
            });
        e
    }
}

/// Builds the log-kernel matrix for a dataset against a list of atoms.
/// Rows are computed independently in parallel.
pub fn kernel_matrix(data: &Dataset, atoms: &[Vec<f64>]) -> Result<LogKernelMatrix> {
    if atoms.is_empty() {
        return Err(Error::ZeroMass { sum: 0.0 });
    }
    let p = data.dim();
    for a in atoms {
        if a.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: a.len(),
                context: "kernel atoms",
            });
        }
    }
    let n = data.len();
    let m = atoms.len();
    let mut entries = vec![0.0; n * m];
    let mut row_max = vec![f64::NEG_INFINITY; n];
    entries
        .par_chunks_mut(m)
        .zip(row_max.par_iter_mut())
        .enumerate()
        .for_each(|(i, (row, rm))| {
            let obs = data.obs(i);
            let sigma = obs.sigma();
            let norm = -0.5 * (p as f64 * LOG_2PI + sigma.log_det());
            let x = obs.x();
            let mut diff = vec![0.0; p];
            for (out, a) in row.iter_mut().zip(atoms) {
                for ((d, &xi), &ai) in diff.iter_mut().zip(x).zip(a) {
                    *d = xi - ai;
                }
                let v = norm - 0.5 * sigma.quad_form(&diff);
                *out = v;
                if v > *rm {
                    *rm = v;
                }
            }
        });
    Ok(LogKernelMatrix {
        entries,
        n,
        m,
        row_max,
    })
}

/// Per-row mixture log-likelihoods `log f_i = log sum_j w_j exp(K_ij)`,
/// evaluated by log-sum-exp with the cached row-max shift.
pub fn row_log_mixture(kernel: &LogKernelMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != kernel.m {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: kernel.m,
            context: "weights vs kernel columns",
        });
    }
    let mut out = vec![0.0; kernel.n];
    for (i, o) in out.iter_mut().enumerate() {
        let rm = kernel.row_max[i];
        let mut acc = 0.0;
        for (&k, &w) in kernel.row(i).iter().zip(weights) {
            if w > 0.0 {
                acc += w * (k - rm).exp();
            }
        }
        if acc <= 0.0 {
            return Err(Error::AllWeightsOnUnderflowedAtoms { row: i });
        }
        *o = acc.ln() + rm;
    }
    Ok(out)
}

/// Mean mixture log-likelihood `(1/n) sum_i log sum_j w_j exp(K_ij)`.
pub fn mixture_loglik(kernel: &LogKernelMatrix, weights: &[f64]) -> Result<f64> {
    let rows = row_log_mixture(kernel, weights)?;
    Ok(rows.iter().sum::<f64>() / rows.len() as f64)
}

/// Density, log-density and gradient of a discrete Gaussian mixture at one
/// point, computed in a single responsibility pass.
#[derive(Debug, Clone)]
pub struct MixtureEval {
    pub log_density: f64,
    pub density: f64,
    pub gradient: Vec<f64>,
}

/// Evaluates `f_{G,Sigma}(x)` and its gradient
/// `grad f = sum_j w_j phi_Sigma(x - a_j) Sigma^{-1}(a_j - x)`.
pub fn mixture_eval(
    x: &[f64],
    sigma: &CovarianceSpec,
    measure: &MixingMeasure,
) -> Result<MixtureEval> {
    let p = sigma.dim();
    if x.len() != p || measure.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: if x.len() != p { x.len() } else { measure.dim() },
            context: "mixture_eval",
        });
    }
    let mut log_terms = Vec::with_capacity(measure.len());
    for (a, &w) in measure.atoms().iter().zip(measure.weights()) {
        if w > 0.0 {
            log_terms.push(w.ln() + log_gauss(x, a, sigma)?);
        } else {
            log_terms.push(f64::NEG_INFINITY);
        }
    }
    let shift = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::AllResponsibilitiesUnderflow);
    }
    let mut total = 0.0;
    let mut weighted_atom = vec![0.0; p];
    for (lt, a) in log_terms.iter().zip(measure.atoms()) {
        let r = (lt - shift).exp();
        if r > 0.0 {
            total += r;
            for (acc, &ai) in weighted_atom.iter_mut().zip(a) {
                *acc += r * ai;
            }
        }
    }
    let log_density = total.ln() + shift;
    let density = log_density.exp();
    // grad f = f * Sigma^{-1} (E[a | x] - x), with E[a | x] from responsibilities.
    let mut drift: Vec<f64> = weighted_atom
        .iter()
        .zip(x)
        .map(|(wa, &xi)| wa / total - xi)
        .collect();
    drift = sigma.solve(&drift);
    let gradient = drift.into_iter().map(|d| d * density).collect();
    Ok(MixtureEval {
        log_density,
        density,
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn lemma2_sigma2() -> f64 {
        3.0 / 256f64.ln()
    }

    fn lemma2_dataset() -> Dataset {
        let h = 3f64.sqrt() / 2.0;
        let pts = [vec![0.0, 1.0], vec![h, -0.5], vec![-h, -0.5]];
        let obs = pts
            .iter()
            .map(|x| {
                Observation::new(
                    x.clone(),
                    CovarianceSpec::isotropic(2, lemma2_sigma2()).unwrap(),
                )
                .unwrap()
            })
            .collect();
        Dataset::new(obs).unwrap()
    }

    fn lemma2_atoms() -> Vec<Vec<f64>> {
        let mut atoms: Vec<Vec<f64>> = lemma2_dataset()
            .iter()
            .map(|o| o.x().iter().map(|v| v / 2.0).collect())
            .collect();
        atoms.push(vec![0.0, 0.0]);
        atoms
    }

    #[test]
    fn standard_normal_at_mean() {
        let sigma = CovarianceSpec::isotropic(2, 1.0).unwrap();
        let v = log_gauss(&[0.3, -0.7], &[0.3, -0.7], &sigma).unwrap();
        assert_relative_eq!(v, -(2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn scalar_closed_form_matches() {
        // Independently derived: density (1/(2 pi s2)) exp(-0.25 / (2 s2))
        // at squared distance 1/4 with s2 = 3/log 256 per coordinate.
        let s2 = lemma2_sigma2();
        let expected = (-0.25 / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2);
        let sigma = CovarianceSpec::isotropic(2, s2).unwrap();
        let v = log_gauss(&[0.0, 1.0], &[0.0, 0.5], &sigma).unwrap();
        assert_relative_eq!(v, expected.ln(), epsilon = 1e-12);
        assert_relative_eq!(expected, 0.23349145585596945, epsilon = 1e-14);
    }

    #[test]
    fn translation_invariance() {
        let sigma = CovarianceSpec::diagonal(vec![0.7, 2.5, 1.1]).unwrap();
        let x = [0.2, -0.4, 1.9];
        let mean = [1.0, 0.0, -2.0];
        let c = [10.5, -3.25, 0.125];
        let xc: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a + b).collect();
        let mc: Vec<f64> = mean.iter().zip(&c).map(|(a, b)| a + b).collect();
        let v1 = log_gauss(&x, &mean, &sigma).unwrap();
        let v2 = log_gauss(&xc, &mc, &sigma).unwrap();
        // identical up to round-off in the shifted inputs
        assert_relative_eq!(v1, v2, max_relative = 1e-13);
    }

    #[test]
    fn single_atom_kernel_entry() {
        let obs = Observation::new(
            vec![0.4, 0.4, 0.4],
            CovarianceSpec::isotropic(3, 1.0).unwrap(),
        )
        .unwrap();
        let data = Dataset::new(vec![obs]).unwrap();
        let k = kernel_matrix(&data, &[vec![0.4, 0.4, 0.4]]).unwrap();
        assert_relative_eq!(k.entry(0, 0), -1.5 * LOG_2PI, epsilon = 1e-12);
        assert_eq!(k.row_max()[0], k.entry(0, 0));
    }

    #[test]
    fn lemma2_kernel_matches_closed_form_matrix() {
        // The 3x4 matrix has entries phi(X_i - X_j/2) for j<=3 and phi(X_i)
        // for j=4; with s2 = 3/log 256 these are (4 log2 / 3pi) 2^{-(4/3) d2}
        // at squared distances d2 in {1/4, 7/4, 1}.
        let data = lemma2_dataset();
        let atoms = lemma2_atoms();
        let k = kernel_matrix(&data, &atoms).unwrap();
        let pref = (4.0 * 2f64.ln() / (3.0 * std::f64::consts::PI)).ln();
        let lg = |d2: f64| pref - d2 * (4.0 / 3.0) * 2f64.ln();
        for i in 0..3 {
            for j in 0..3 {
                let d2 = if i == j { 0.25 } else { 1.75 };
                assert_relative_eq!(k.entry(i, j), lg(d2), epsilon = 1e-12);
            }
            assert_relative_eq!(k.entry(i, 3), lg(1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn far_atoms_stay_finite() {
        let obs = Observation::new(vec![0.0, 0.0], CovarianceSpec::isotropic(2, 1.0).unwrap())
            .unwrap();
        let data = Dataset::new(vec![obs]).unwrap();
        let k = kernel_matrix(&data, &[vec![0.0, 0.0], vec![500.0, 500.0]]).unwrap();
        assert!(k.entry(0, 1).is_finite());
        assert!(k.entry(0, 1) < k.row_max()[0] - 1e5);
    }

    #[test]
    fn kernel_entries_respect_density_upper_bound() {
        let data = lemma2_dataset();
        let k = kernel_matrix(&data, &lemma2_atoms()).unwrap();
        let p = data.dim() as f64;
        let bound = -0.5 * p * (LOG_2PI.exp().ln() + data.k_lower().ln());
        let bound = bound.max(-0.5 * p * ((2.0 * std::f64::consts::PI * data.k_lower()).ln()));
        for i in 0..k.n() {
            for j in 0..k.m() {
                assert!(k.entry(i, j) <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn loglik_single_observation_delta() {
        let obs = Observation::new(
            vec![1.0, 2.0],
            CovarianceSpec::isotropic(2, 1.0).unwrap(),
        )
        .unwrap();
        let data = Dataset::new(vec![obs]).unwrap();
        let k = kernel_matrix(&data, &[vec![1.0, 2.0], vec![9.0, 9.0]]).unwrap();
        let ll = mixture_loglik(&k, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(ll, -LOG_2PI, epsilon = 1e-12);
    }

    #[test]
    fn lemma2_fixture_equal_loglik_for_both_solutions() {
        // Appendix-A identity: both the uniform measure on {X_i/2} and the
        // point mass at the origin give every row likelihood
        // 2^{2/3} log 2 / (3 pi).
        let data = lemma2_dataset();
        let k = kernel_matrix(&data, &lemma2_atoms()).unwrap();
        let lstar = (2f64.powf(2.0 / 3.0) * 2f64.ln() / (3.0 * std::f64::consts::PI)).ln();
        let third = 1.0 / 3.0;
        let rows_mix = row_log_mixture(&k, &[third, third, third, 0.0]).unwrap();
        let rows_origin = row_log_mixture(&k, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        for i in 0..3 {
            assert_relative_eq!(rows_mix[i], lstar, epsilon = 1e-12);
            assert_relative_eq!(rows_origin[i], lstar, epsilon = 1e-12);
        }
    }

    #[test]
    fn underflowed_row_is_an_error() {
        let obs = Observation::new(vec![0.0], CovarianceSpec::isotropic(1, 1e-4).unwrap())
            .unwrap();
        let data = Dataset::new(vec![obs]).unwrap();
        let k = kernel_matrix(&data, &[vec![100.0], vec![200.0]]).unwrap();
        // All mass on the farther atom: its shifted kernel value underflows.
        let res = mixture_loglik(&k, &[0.0, 1.0]);
        assert!(matches!(
            res,
            Err(Error::AllWeightsOnUnderflowedAtoms { row: 0 })
        ));
    }

    #[test]
    fn single_atom_gradient_closed_form() {
        let sigma = CovarianceSpec::diagonal(vec![0.5, 2.0]).unwrap();
        let g = MixingMeasure::dirac(vec![1.0, -1.0]);
        let x = [0.25, 0.5];
        let eval = mixture_eval(&x, &sigma, &g).unwrap();
        let expected = sigma.solve(&[1.0 - 0.25, -1.0 - 0.5]);
        for (got, want) in eval.gradient.iter().zip(&expected) {
            assert_relative_eq!(*got, want * eval.density, max_relative = 1e-12);
        }
        assert_relative_eq!(eval.density, eval.log_density.exp(), max_relative = 1e-15);
    }

    #[test]
    fn symmetric_two_atom_gradient_vanishes() {
        let sigma = CovarianceSpec::isotropic(2, 1.0).unwrap();
        let g = MixingMeasure::new(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let eval = mixture_eval(&[0.0, 0.0], &sigma, &g).unwrap();
        assert_relative_eq!(eval.gradient[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(eval.gradient[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let p = 1 + rng.gen_range(0..3usize);
            let m = 1 + rng.gen_range(0..5usize);
            let atoms: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
            let g = MixingMeasure::new(atoms, weights).unwrap();
            let vars: Vec<f64> = (0..p).map(|_| rng.gen_range(0.3..2.0)).collect();
            let sigma = CovarianceSpec::diagonal(vars).unwrap();
            let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.5..2.5)).collect();
            let eval = mixture_eval(&x, &sigma, &g).unwrap();
            let h = 1e-5;
            for d in 0..p {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[d] += h;
                xm[d] -= h;
                let fp = mixture_eval(&xp, &sigma, &g).unwrap().density;
                let fm = mixture_eval(&xm, &sigma, &g).unwrap().density;
                let fd = (fp - fm) / (2.0 * h);
                let scale = eval.gradient[d].abs().max(eval.density).max(1e-12);
                assert!(
                    (eval.gradient[d] - fd).abs() <= 1e-6 * scale,
                    "component {d}: analytic {} vs fd {}",
                    eval.gradient[d],
                    fd
                );
            }
        }
    }

    #[test]
    fn loglik_concave_in_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs: Vec<Observation> = (0..6)
            .map(|_| {
                Observation::new(
                    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    CovarianceSpec::isotropic(2, rng.gen_range(0.4..1.5)).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let data = Dataset::new(obs).unwrap();
        let atoms: Vec<Vec<f64>> = (0..8)
            .map(|_| vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)])
            .collect();
        let k = kernel_matrix(&data, &atoms).unwrap();
        for _ in 0..50 {
            let simplex = |rng: &mut ChaCha8Rng| {
                let mut w: Vec<f64> = (0..8).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= s);
                w
            };
            let w1 = simplex(&mut rng);
            let w2 = simplex(&mut rng);
            let t: f64 = rng.gen();
            let wm: Vec<f64> = w1
                .iter()
                .zip(&w2)
                .map(|(a, b)| t * a + (1.0 - t) * b)
                .collect();
            let l1 = mixture_loglik(&k, &w1).unwrap();
            let l2 = mixture_loglik(&k, &w2).unwrap();
            let lm = mixture_loglik(&k, &wm).unwrap();
            assert!(lm >= t * l1 + (1.0 - t) * l2 - 1e-10);
        }
    }

    #[test]
    fn shifted_exp_row_max_is_one() {
        let data = lemma2_dataset();
        let k = kernel_matrix(&data, &lemma2_atoms()).unwrap();
        let e = k.shifted_exp();
        for i in 0..k.n() {
            let row_max = e[i * k.m()..(i + 1) * k.m()]
                .iter()
                .cloned()
                .fold(0.0, f64::max);
            assert_eq!(row_max, 1.0);
        }
    }
}
