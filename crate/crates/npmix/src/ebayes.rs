//! Empirical Bayes posterior inference under a fitted (or known) mixing
//! measure: posterior responsibilities, posterior means by direct mixing and
//! by the score-based shrinkage identity, and the regularized variant with a
//! density floor in the denominator.

use rayon::prelude::*;

use crate::kernels::{log_gauss, mixture_eval, LOG_2PI};
use crate::model::{CovarianceSpec, Dataset, MixingMeasure};
use crate::{Error, Result};

/// Posterior summary for one observation.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// Posterior weights over the atoms of the mixing measure.
    pub responsibilities: Vec<f64>,
    /// Posterior mean of the latent location.
    pub mean: Vec<f64>,
    /// Whether the density floor was active for this observation.
    pub used_regularization: bool,
}

/// Density floor for the shrinkage denominator: the marginal density is
/// replaced by `max(f, rho / sqrt(det Sigma))`.
#[derive(Debug, Clone, Copy)]
pub struct RegularizationPolicy {
    pub rho: f64,
}

impl RegularizationPolicy {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::DeltaOutOfRange {
                delta: rho,
                max_delta: f64::INFINITY,
            });
        }
        Ok(Self { rho })
    }

    /// The default choice `rho = (2 pi)^{-p/2} / n`.
    pub fn default_for(dim: usize, n: usize) -> Self {
        Self {
            rho: (-0.5 * dim as f64 * LOG_2PI).exp() / n.max(1) as f64,
        }
    }

    /// `log(rho / sqrt(det Sigma))`, the log of the density floor.
    fn log_floor(&self, sigma: &CovarianceSpec) -> f64 {
        self.rho.ln() - 0.5 * sigma.log_det()
    }
}

/// Posterior mean by direct mixing: responsibilities
/// `r_j ∝ w_j phi_Sigma(x - a_j)` normalized in log space, and
/// `mean = sum_j r_j a_j`.
pub fn posterior_mean_direct(
    x: &[f64],
    sigma: &CovarianceSpec,
    measure: &MixingMeasure,
) -> Result<PosteriorSummary> {
    let p = sigma.dim();
    if x.len() != p || measure.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: if x.len() != p { x.len() } else { measure.dim() },
            context: "posterior_mean_direct",
        });
    }
    let mut log_terms = Vec::with_capacity(measure.len());
    for (a, &w) in measure.atoms().iter().zip(measure.weights()) {
        let lt = if w > 0.0 {
            w.ln() + log_gauss(x, a, sigma)?
        } else {
            f64::NEG_INFINITY
        };
        log_terms.push(lt);
    }
    let shift = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::AllResponsibilitiesUnderflow);
    }
    let mut responsibilities: Vec<f64> = log_terms.iter().map(|lt| (lt - shift).exp()).collect();
    let total: f64 = responsibilities.iter().sum();
    for r in &mut responsibilities {
        *r /= total;
    }
    let mut mean = vec![0.0; p];
    for (a, &r) in measure.atoms().iter().zip(&responsibilities) {
        if r > 0.0 {
            for (mu, &ai) in mean.iter_mut().zip(a) {
                *mu += r * ai;
            }
        }
    }
    Ok(PosteriorSummary {
        responsibilities,
        mean,
        used_regularization: false,
    })
}

/// Posterior mean through the marginal score: `x + Sigma grad f / f`.
///
/// With a policy, the denominator becomes `max(f, rho / sqrt(det Sigma))`
/// and `used_regularization` records whether the floor was binding. Without
/// a policy a vanishing density is an error.
pub fn posterior_mean_tweedie(
    x: &[f64],
    sigma: &CovarianceSpec,
    measure: &MixingMeasure,
    policy: Option<&RegularizationPolicy>,
) -> Result<PosteriorSummary> {
    let eval = mixture_eval(x, sigma, measure)?;
    let direct = posterior_mean_direct(x, sigma, measure)?;
    let (denominator, floored) = match policy {
        Some(policy) => {
            let log_floor = policy.log_floor(sigma);
            if eval.log_density < log_floor {
                (log_floor.exp(), true)
            } else {
                (eval.density, false)
            }
        }
        None => {
            if eval.density <= 0.0 {
                return Err(Error::ZeroDensity);
            }
            (eval.density, false)
        }
    };
    let correction = sigma.mul(
        &eval
            .gradient
            .iter()
            .map(|g| g / denominator)
            .collect::<Vec<_>>(),
    );
    let mean = x.iter().zip(&correction).map(|(xi, c)| xi + c).collect();
    Ok(PosteriorSummary {
        responsibilities: direct.responsibilities,
        mean,
        used_regularization: floored,
    })
}

/// Denoises every observation with its own covariance. The direct mixing
/// formula is used wherever the density clears the floor (there it agrees
/// with the score form exactly for discrete measures); observations under
/// the floor get the regularized score correction and are flagged.
pub fn denoise(
    data: &Dataset,
    measure: &MixingMeasure,
    policy: &RegularizationPolicy,
) -> Result<Vec<PosteriorSummary>> {
    if data.dim() != measure.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: measure.dim(),
            context: "denoise",
        });
    }
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let obs = data.obs(i);
            let eval =
                mixture_eval(obs.x(), obs.sigma(), measure).map_err(|e| e.at_row(i))?;
            if eval.log_density < policy.log_floor(obs.sigma()) {
                posterior_mean_tweedie(obs.x(), obs.sigma(), measure, Some(policy))
                    .map_err(|e| e.at_row(i))
            } else {
                posterior_mean_direct(obs.x(), obs.sigma(), measure).map_err(|e| e.at_row(i))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{pushforward, transform_dataset, AffineMap, Observation};
    use crate::Error;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn two_atom_measure() -> MixingMeasure {
        MixingMeasure::new(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn dirac_prior_returns_atom() {
        let g = MixingMeasure::dirac(vec![2.0, -3.0]);
        let sigma = CovarianceSpec::diagonal(vec![0.3, 4.0]).unwrap();
        // direct form works arbitrarily far out thanks to log-space weights
        for x in [[0.0, 0.0], [100.0, -50.0]] {
            let s = posterior_mean_direct(&x, &sigma, &g).unwrap();
            assert_eq!(s.mean, vec![2.0, -3.0]);
            assert_eq!(s.responsibilities, vec![1.0]);
        }
        // score form agrees where the density has not underflowed
        for x in [[0.0, 0.0], [3.0, 1.0]] {
            let t = posterior_mean_tweedie(&x, &sigma, &g, None).unwrap();
            assert_relative_eq!(t.mean[0], 2.0, epsilon = 1e-9);
            assert_relative_eq!(t.mean[1], -3.0, epsilon = 1e-9);
        }
        // and reports the underflow in the far tail
        assert!(matches!(
            posterior_mean_tweedie(&[100.0, -50.0], &sigma, &g, None),
            Err(Error::ZeroDensity)
        ));
    }

    #[test]
    fn symmetric_two_atom_prior_at_origin() {
        let sigma = CovarianceSpec::isotropic(1, 1.0).unwrap();
        let s = posterior_mean_direct(&[0.0], &sigma, &two_atom_measure()).unwrap();
        assert_relative_eq!(s.mean[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_atom_prior_is_tanh() {
        // Bayes ratio (e^x - e^{-x})/(e^x + e^{-x}) for unit variance and
        // atoms at -1 and 1, computed independently.
        let sigma = CovarianceSpec::isotropic(1, 1.0).unwrap();
        let s = posterior_mean_direct(&[1.0], &sigma, &two_atom_measure()).unwrap();
        assert_relative_eq!(s.mean[0], 1f64.tanh(), epsilon = 1e-12);
        assert_relative_eq!(s.mean[0], 0.7615941559557649, epsilon = 1e-12);
    }

    #[test]
    fn tweedie_matches_direct_when_floor_idle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let p = 1 + rng.gen_range(0..3usize);
            let m = 1 + rng.gen_range(0..6usize);
            let atoms: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
            let g = MixingMeasure::new(atoms, weights).unwrap();
            let sigma =
                CovarianceSpec::diagonal((0..p).map(|_| rng.gen_range(0.3..2.0)).collect())
                    .unwrap();
            let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let direct = posterior_mean_direct(&x, &sigma, &g).unwrap();
            let tweedie = posterior_mean_tweedie(&x, &sigma, &g, None).unwrap();
            let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff: f64 = direct
                .mean
                .iter()
                .zip(&tweedie.mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-8 * (1.0 + norm), "diff {diff} too large");
        }
    }

    #[test]
    fn huge_floor_crushes_correction() {
        let g = two_atom_measure();
        let sigma = CovarianceSpec::isotropic(1, 1.0).unwrap();
        let policy = RegularizationPolicy::new(1e12).unwrap();
        let x = [40.0];
        let s = posterior_mean_tweedie(&x, &sigma, &g, Some(&policy)).unwrap();
        assert!(s.used_regularization);
        assert_relative_eq!(s.mean[0], 40.0, epsilon = 1e-6);
    }

    #[test]
    fn regularization_flag_matches_floor_inequality() {
        let g = two_atom_measure();
        let sigma = CovarianceSpec::isotropic(1, 1.0).unwrap();
        let policy = RegularizationPolicy::new(0.05).unwrap();
        for x in [0.0, 1.0, 3.0, 5.0, 8.0] {
            let eval = mixture_eval(&[x], &sigma, &g).unwrap();
            let s = posterior_mean_tweedie(&[x], &sigma, &g, Some(&policy)).unwrap();
            let floor = policy.rho / (0.5 * sigma.log_det()).exp();
            assert_eq!(
                s.used_regularization,
                eval.density < floor,
                "flag mismatch at x={x}"
            );
        }
    }

    #[test]
    fn posterior_mean_stays_in_convex_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = MixingMeasure::new(
            vec![vec![-2.0], vec![0.5], vec![3.0]],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let sigma = CovarianceSpec::isotropic(1, 0.7).unwrap();
        for _ in 0..200 {
            let x = [rng.gen_range(-10.0..10.0)];
            let s = posterior_mean_direct(&x, &sigma, &g).unwrap();
            assert!(s.mean[0] >= -2.0 - 1e-12 && s.mean[0] <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn denoise_shrinks_variance_and_respects_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let atoms = vec![vec![-1.5], vec![0.0], vec![1.5]];
        let g = MixingMeasure::new(atoms, vec![0.3, 0.4, 0.3]).unwrap();
        let obs: Vec<Observation> = (0..300)
            .map(|_| {
                let pick = rng.gen_range(0..3usize);
                let center = [-1.5, 0.0, 1.5][pick];
                let x = center + rng.sample::<f64, _>(rand_distr::StandardNormal);
                Observation::new(vec![x], CovarianceSpec::isotropic(1, 1.0).unwrap()).unwrap()
            })
            .collect();
        let data = Dataset::new(obs).unwrap();
        let policy = RegularizationPolicy::default_for(1, data.len());
        let out = denoise(&data, &g, &policy).unwrap();
        let raw_var = variance(data.iter().map(|o| o.x()[0]));
        let den_var = variance(out.iter().map(|s| s.mean[0]));
        assert!(den_var < raw_var);
        for s in &out {
            assert!(s.mean[0] >= -1.5 - 1e-9 && s.mean[0] <= 1.5 + 1e-9);
        }
    }

    fn variance(values: impl Iterator<Item = f64>) -> f64 {
        let v: Vec<f64> = values.collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn denoise_equivariant_under_rigid_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = MixingMeasure::new(
            vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![-0.5, 0.5]],
            vec![0.5, 0.25, 0.25],
        )
        .unwrap();
        let obs: Vec<Observation> = (0..40)
            .map(|_| {
                Observation::new(
                    vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                    CovarianceSpec::diagonal(vec![
                        rng.gen_range(0.4..1.0),
                        rng.gen_range(0.4..1.0),
                    ])
                    .unwrap(),
                )
                .unwrap()
            })
            .collect();
        let data = Dataset::new(obs).unwrap();
        let rot = AffineMap::rotation_2d(1.1);
        let map = AffineMap::new(rot.rotation().clone(), vec![3.0, -2.0]).unwrap();
        let moved = transform_dataset(&data, &map).unwrap();
        let g_moved = pushforward(&g, &map).unwrap();
        let policy = RegularizationPolicy::default_for(2, data.len());
        let base = denoise(&data, &g, &policy).unwrap();
        let transformed = denoise(&moved, &g_moved, &policy).unwrap();
        for (b, t) in base.iter().zip(&transformed) {
            let mapped = map.apply(&b.mean).unwrap();
            for (a, c) in mapped.iter().zip(&t.mean) {
                assert_relative_eq!(a, c, epsilon = 1e-9);
            }
        }
    }
}
