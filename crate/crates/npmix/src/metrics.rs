//! Evaluation metrics: average squared Hellinger distance between the
//! mixture families induced by two mixing measures, exact 2-Wasserstein
//! distance between discrete measures, its point-mass closed form, and
//! regret.

use std::collections::HashMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::kernels::mixture_eval;
use crate::model::{CovarianceSpec, Dataset, MixingMeasure};
use crate::{Error, Result};

/// Default cap on `m_G * m_H` cost entries for the transport solve.
pub const DEFAULT_TRANSPORT_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HellingerMethod {
    Quadrature,
    MonteCarlo,
}

/// An estimate of the average squared Hellinger distance.
#[derive(Debug, Clone)]
pub struct HellingerEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: HellingerMethod,
    pub samples: usize,
}

/// An exact optimal transport plan between two discrete measures under
/// squared Euclidean cost.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// Squared 2-Wasserstein distance (the optimal cost).
    pub cost: f64,
    /// Nonzero flows `(source atom, target atom, mass)`.
    pub flows: Vec<(usize, usize, f64)>,
}

/// Monte Carlo estimate of the average squared Hellinger distance between
/// the mixture families `f_{G, Sigma_i}` and `f_{H, Sigma_i}`.
///
/// Each squared distance `h^2 = 1 - int sqrt(f g)` is estimated by
/// importance sampling from the balanced mixture `(f + g)/2`: a fair coin
/// picks one of the two mixtures, an atom is drawn by weight and noise is
/// added, and the bounded integrand `sqrt(fg) / ((f+g)/2)` is averaged.
/// Estimates are cached per distinct covariance.
pub fn avg_hellinger_sq(
    g: &MixingMeasure,
    h: &MixingMeasure,
    data: &Dataset,
    n_samples: usize,
    seed: u64,
) -> Result<HellingerEstimate> {
    if n_samples == 0 {
        return Err(Error::LengthMismatch {
            left: 0,
            right: 1,
            context: "n_samples must be at least 1",
        });
    }
    let p = data.dim();
    if g.dim() != p || h.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: if g.dim() != p { g.dim() } else { h.dim() },
            context: "avg_hellinger_sq",
        });
    }
    // one estimate per distinct covariance, weighted by multiplicity
    let mut groups: Vec<(CovarianceSpec, usize)> = Vec::new();
    for obs in data.iter() {
        match groups.iter_mut().find(|(s, _)| s == obs.sigma()) {
            Some((_, count)) => *count += 1,
            None => groups.push((obs.sigma().clone(), 1)),
        }
    }
    let n = data.len() as f64;
    let mut value = 0.0;
    let mut variance = 0.0;
    for (gi, (sigma, count)) in groups.iter().enumerate() {
        let mut rng = stream_rng(seed, gi as u64);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_samples {
            let from_g: bool = rng.gen();
            let source = if from_g { g } else { h };
            let x = sample_mixture(source, sigma, &mut rng);
            let lf = mixture_eval(&x, sigma, g)?.log_density;
            let lg = mixture_eval(&x, sigma, h)?.log_density;
            // r = sqrt(f g) / ((f + g)/2), bounded in [0, 1]
            let log_num = 0.5 * (lf + lg);
            let log_den = log_add_exp(lf, lg) - std::f64::consts::LN_2;
            let r = (log_num - log_den).exp();
            sum += r;
            sum_sq += r * r;
        }
        let mean = sum / n_samples as f64;
        let var = ((sum_sq / n_samples as f64) - mean * mean).max(0.0) / n_samples as f64;
        let weight = *count as f64 / n;
        value += weight * (1.0 - mean);
        variance += weight * weight * var;
    }
    Ok(HellingerEstimate {
        value: value.clamp(0.0, 1.0),
        std_error: variance.sqrt(),
        method: HellingerMethod::MonteCarlo,
        samples: n_samples,
    })
}

/// Fixed-grid trapezoid quadrature for the univariate case: 4096 nodes over
/// the atom range of both measures extended by six noise standard
/// deviations.
pub fn avg_hellinger_sq_quadrature(
    g: &MixingMeasure,
    h: &MixingMeasure,
    data: &Dataset,
) -> Result<HellingerEstimate> {
    if data.dim() != 1 {
        return Err(Error::UnsupportedDimension {
            op: "hellinger quadrature",
            required: 1,
            got: data.dim(),
        });
    }
    if g.dim() != 1 || h.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: g.dim().max(h.dim()),
            context: "avg_hellinger_sq_quadrature",
        });
    }
    const NODES: usize = 4096;
    let pad = 6.0 * data.k_upper().sqrt();
    let lo = g
        .atoms()
        .iter()
        .chain(h.atoms())
        .map(|a| a[0])
        .fold(f64::INFINITY, f64::min)
        - pad;
    let hi = g
        .atoms()
        .iter()
        .chain(h.atoms())
        .map(|a| a[0])
        .fold(f64::NEG_INFINITY, f64::max)
        + pad;
    let step = (hi - lo) / (NODES - 1) as f64;

    let mut groups: Vec<(CovarianceSpec, usize)> = Vec::new();
    for obs in data.iter() {
        match groups.iter_mut().find(|(s, _)| s == obs.sigma()) {
            Some((_, count)) => *count += 1,
            None => groups.push((obs.sigma().clone(), 1)),
        }
    }
    let n = data.len() as f64;
    let mut value = 0.0;
    for (sigma, count) in &groups {
        let mut affinity = 0.0;
        for k in 0..NODES {
            let x = [lo + k as f64 * step];
            let lf = mixture_eval(&x, sigma, g)?.log_density;
            let lg = mixture_eval(&x, sigma, h)?.log_density;
            let integrand = (0.5 * (lf + lg)).exp();
            let w = if k == 0 || k == NODES - 1 { 0.5 } else { 1.0 };
            affinity += w * integrand * step;
        }
        value += (*count as f64 / n) * (1.0 - affinity);
    }
    Ok(HellingerEstimate {
        value: value.clamp(0.0, 1.0),
        std_error: 0.0,
        method: HellingerMethod::Quadrature,
        samples: 0,
    })
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if !hi.is_finite() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn sample_mixture(
    measure: &MixingMeasure,
    sigma: &CovarianceSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut u: f64 = rng.gen();
    let mut idx = measure.len() - 1;
    for (j, &w) in measure.weights().iter().enumerate() {
        if u < w {
            idx = j;
            break;
        }
        u -= w;
    }
    let p = measure.dim();
    let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let noise = sigma.sqrt_mul(&z);
    measure.atoms()[idx]
        .iter()
        .zip(&noise)
        .map(|(a, e)| a + e)
        .collect()
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Exact squared 2-Wasserstein distance between two discrete measures, with
/// the optimal plan, under the default size cap.
pub fn wasserstein2(g: &MixingMeasure, h: &MixingMeasure) -> Result<TransportPlan> {
    wasserstein2_capped(g, h, DEFAULT_TRANSPORT_CAP)
}

/// Exact optimal transport by successive shortest augmenting paths with
/// node potentials on the dense bipartite graph. All costs are squared
/// Euclidean distances, hence nonnegative, so Dijkstra applies from the
/// first augmentation.
pub fn wasserstein2_capped(
    g: &MixingMeasure,
    h: &MixingMeasure,
    cap: usize,
) -> Result<TransportPlan> {
    if g.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: h.dim(),
            context: "wasserstein2",
        });
    }
    let mg = g.len();
    let mh = h.len();
    let entries = mg.saturating_mul(mh);
    if entries > cap {
        return Err(Error::SizeLimit { entries, cap });
    }
    let mut cost = vec![0.0; entries];
    for (i, a) in g.atoms().iter().enumerate() {
        for (j, b) in h.atoms().iter().enumerate() {
            cost[i * mh + j] = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        }
    }
    let flows = min_cost_transport(g.weights(), h.weights(), &cost, mh);
    let total: f64 = flows
        .iter()
        .map(|&(i, j, f)| f * cost[i * mh + j])
        .sum();
    Ok(TransportPlan { cost: total, flows })
}

/// Solves the balanced transportation problem exactly. Supplies and demands
/// must each sum to one (up to round-off); the returned flows satisfy the
/// marginals to working precision.
fn min_cost_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
    mh: usize,
) -> Vec<(usize, usize, f64)> {
    const DUST: f64 = 1e-15;
    let mg = supply.len();
    let total_nodes = mg + mh;
    let mut residual_supply = supply.to_vec();
    let mut residual_demand = demand.to_vec();
    let mut flow: HashMap<(usize, usize), f64> = HashMap::new();
    let mut potential = vec![0.0; total_nodes];

    loop {
        let remaining: f64 = residual_supply.iter().sum();
        if remaining <= DUST * mg as f64 {
            break;
        }
        // Dijkstra over the residual graph with reduced costs.
        let mut dist = vec![f64::INFINITY; total_nodes];
        let mut parent: Vec<Option<usize>> = vec![None; total_nodes];
        let mut done = vec![false; total_nodes];
        for i in 0..mg {
            if residual_supply[i] > DUST {
                dist[i] = 0.0;
            }
        }
        let mut target = None;
        loop {
            let mut u = None;
            let mut best = f64::INFINITY;
            for v in 0..total_nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = Some(v);
                }
            }
            let u = match u {
                Some(u) => u,
                None => break,
            };
            done[u] = true;
            if u >= mg && residual_demand[u - mg] > DUST {
                target = Some(u);
                break;
            }
            if u < mg {
                // forward arcs to all sinks
                for j in 0..mh {
                    let v = mg + j;
                    if done[v] {
                        continue;
                    }
                    let rc = cost[u * mh + j] + potential[u] - potential[v];
                    let nd = dist[u] + rc.max(0.0);
                    if nd < dist[v] {
                        dist[v] = nd;
                        parent[v] = Some(u);
                    }
                }
            } else {
                // reverse arcs along existing flow
                let j = u - mg;
                for i in 0..mg {
                    if done[i] {
                        continue;
                    }
                    if flow.get(&(i, j)).copied().unwrap_or(0.0) > DUST {
                        let rc = -(cost[i * mh + j] + potential[i] - potential[u]);
                        let nd = dist[u] + rc.max(0.0);
                        if nd < dist[i] {
                            dist[i] = nd;
                            parent[i] = Some(u);
                        }
                    }
                }
            }
        }
        let target = match target {
            Some(t) => t,
            None => break,
        };
        // update potentials
        let dt = dist[target];
        for v in 0..total_nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v].min(dt);
            } else {
                potential[v] += dt;
            }
        }
        // trace the augmenting path and find the bottleneck
        let mut path = Vec::new();
        let mut v = target;
        while let Some(u) = parent[v] {
            path.push((u, v));
            v = u;
        }
        path.reverse();
        let start = path[0].0;
        let mut bottleneck = residual_supply[start].min(residual_demand[target - mg]);
        for &(u, v) in &path {
            if u >= mg {
                // reverse arc: limited by flow on (v, u-mg)
                bottleneck = bottleneck.min(flow.get(&(v, u - mg)).copied().unwrap_or(0.0));
            }
        }
        if bottleneck <= DUST {
            break;
        }
        for &(u, v) in &path {
            if u < mg {
                *flow.entry((u, v - mg)).or_insert(0.0) += bottleneck;
            } else {
                let e = flow.get_mut(&(v, u - mg)).expect("reverse arc has flow");
                *e -= bottleneck;
                if *e <= DUST {
                    flow.remove(&(v, u - mg));
                }
            }
        }
        residual_supply[start] -= bottleneck;
        residual_demand[target - mg] -= bottleneck;
    }
    let mut flows: Vec<(usize, usize, f64)> = flow
        .into_iter()
        .filter(|&(_, f)| f > DUST)
        .map(|((i, j), f)| (i, j, f))
        .collect();
    flows.sort_by_key(|&(i, j, _)| (i, j));
    flows
}

/// `W_2(G, delta_mu) = sqrt(sum_j w_j |a_j - mu|^2)`: against a point mass
/// the coupling is unique, so the distance has a closed form.
pub fn w2_to_point_mass(g: &MixingMeasure, mu: &[f64]) -> f64 {
    g.atoms()
        .iter()
        .zip(g.weights())
        .map(|(a, &w)| {
            w * a
                .iter()
                .zip(mu)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Mean squared distance between two equally long lists of vectors.
pub fn regret(estimates: &[Vec<f64>], oracle: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != oracle.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: oracle.len(),
            context: "regret",
        });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (e, o) in estimates.iter().zip(oracle) {
        if e.len() != o.len() {
            return Err(Error::DimensionMismatch {
                expected: o.len(),
                got: e.len(),
                context: "regret vectors",
            });
        }
        total += e
            .iter()
            .zip(o)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / estimates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;
    use approx::assert_relative_eq;

    fn unit_dataset_1d(sigma2: f64) -> Dataset {
        Dataset::new(vec![Observation::new(
            vec![0.0],
            CovarianceSpec::isotropic(1, sigma2).unwrap(),
        )
        .unwrap()])
        .unwrap()
    }

    fn measure(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> MixingMeasure {
        MixingMeasure::new(atoms, weights).unwrap()
    }

    #[test]
    fn hellinger_zero_for_identical_measures() {
        let g = measure(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]);
        let data = unit_dataset_1d(1.0);
        let q = avg_hellinger_sq_quadrature(&g, &g, &data).unwrap();
        // limited only by domain truncation at six standard deviations
        assert!(q.value.abs() < 1e-7, "quadrature self-distance {}", q.value);
        let mc = avg_hellinger_sq(&g, &g, &data, 2000, 1).unwrap();
        assert!(mc.value.abs() < 1e-12);
        assert!(mc.std_error < 1e-12);
    }

    #[test]
    fn hellinger_gaussian_closed_form() {
        // h^2 between N(0,1) and N(mu,1) is 1 - exp(-mu^2/8).
        let g = measure(vec![vec![0.0]], vec![1.0]);
        let h = measure(vec![vec![2.0]], vec![1.0]);
        let data = unit_dataset_1d(1.0);
        let q = avg_hellinger_sq_quadrature(&g, &h, &data).unwrap();
        assert_relative_eq!(q.value, 1.0 - (-0.5f64).exp(), epsilon = 1e-4);
        assert_relative_eq!(q.value, 0.3934693402873666, epsilon = 1e-4);
    }

    #[test]
    fn hellinger_mc_consistent_with_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..20u64 {
            let natoms = 1 + rng.gen_range(0..3usize);
            let mk = |rng: &mut ChaCha8Rng| {
                let atoms: Vec<Vec<f64>> = (0..natoms)
                    .map(|_| vec![rng.gen_range(-2.0..2.0)])
                    .collect();
                let w: Vec<f64> = (0..natoms).map(|_| rng.gen_range(0.1..1.0)).collect();
                measure(atoms, w)
            };
            let g = mk(&mut rng);
            let h = mk(&mut rng);
            let data = unit_dataset_1d(rng.gen_range(0.5..1.5));
            let q = avg_hellinger_sq_quadrature(&g, &h, &data).unwrap();
            let mc = avg_hellinger_sq(&g, &h, &data, 40_000, 2024_000 + trial).unwrap();
            let tol = 3.0 * mc.std_error + 1e-4;
            assert!(
                (q.value - mc.value).abs() <= tol,
                "trial {trial}: quadrature {} vs mc {} +- {}",
                q.value,
                mc.value,
                mc.std_error
            );
        }
    }

    #[test]
    fn hellinger_symmetric() {
        let g = measure(vec![vec![0.0], vec![0.7]], vec![0.4, 0.6]);
        let h = measure(vec![vec![-0.5]], vec![1.0]);
        let data = unit_dataset_1d(0.8);
        let a = avg_hellinger_sq_quadrature(&g, &h, &data).unwrap();
        let b = avg_hellinger_sq_quadrature(&h, &g, &data).unwrap();
        assert_relative_eq!(a.value, b.value, epsilon = 1e-12);
    }

    #[test]
    fn w2_between_point_masses() {
        let g = measure(vec![vec![0.0, 0.0]], vec![1.0]);
        let h = measure(vec![vec![3.0, 4.0]], vec![1.0]);
        let plan = wasserstein2(&g, &h).unwrap();
        assert_relative_eq!(plan.cost, 25.0, epsilon = 1e-12);
        assert_eq!(plan.flows, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn w2_two_to_one() {
        let g = measure(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5]);
        let h = measure(vec![vec![0.0, 0.0]], vec![1.0]);
        let plan = wasserstein2(&g, &h).unwrap();
        assert_relative_eq!(plan.cost, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn plan_marginals_match_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let mg = 1 + rng.gen_range(0..5usize);
            let mh = 1 + rng.gen_range(0..5usize);
            let g = random_measure(&mut rng, mg);
            let h = random_measure(&mut rng, mh);
            let plan = wasserstein2(&g, &h).unwrap();
            let mut source = vec![0.0; g.len()];
            let mut sink = vec![0.0; h.len()];
            for &(i, j, f) in &plan.flows {
                assert!(f >= 0.0);
                source[i] += f;
                sink[j] += f;
            }
            for (got, want) in source.iter().zip(g.weights()) {
                assert!((got - want).abs() <= 1e-9, "source marginal {got} vs {want}");
            }
            for (got, want) in sink.iter().zip(h.weights()) {
                assert!((got - want).abs() <= 1e-9, "sink marginal {got} vs {want}");
            }
        }
    }

    fn random_measure(rng: &mut ChaCha8Rng, m: usize) -> MixingMeasure {
        let atoms: Vec<Vec<f64>> = (0..m)
            .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
            .collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        measure(atoms, w)
    }

    /// Brute-force oracle: enumerate candidate bases of the transportation
    /// polytope (all edge subsets of size mg + mh - 1), solve each for the
    /// flows, and keep the cheapest feasible vertex.
    fn brute_force_cost(g: &MixingMeasure, h: &MixingMeasure) -> f64 {
        let mg = g.len();
        let mh = h.len();
        let edges: Vec<(usize, usize)> = (0..mg)
            .flat_map(|i| (0..mh).map(move |j| (i, j)))
            .collect();
        let k = mg + mh - 1;
        let cost = |i: usize, j: usize| -> f64 {
            g.atoms()[i]
                .iter()
                .zip(&h.atoms()[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        let mut best = f64::INFINITY;
        let mut chosen = vec![0usize; k];
        enumerate_subsets(edges.len(), k, 0, 0, &mut chosen, &mut |subset| {
            // Solve the flow-conservation system restricted to this basis:
            // rows = mg supply constraints + (mh - 1) demand constraints.
            let rows = mg + mh - 1;
            let mut a = nalgebra::DMatrix::zeros(rows, k);
            let mut b = nalgebra::DVector::zeros(rows);
            for (col, &e) in subset.iter().enumerate() {
                let (i, j) = edges[e];
                a[(i, col)] = 1.0;
                if j < mh - 1 {
                    a[(mg + j, col)] = 1.0;
                }
            }
            for i in 0..mg {
                b[i] = g.weights()[i];
            }
            for j in 0..mh - 1 {
                b[mg + j] = h.weights()[j];
            }
            let decomp = a.clone().lu();
            if let Some(x) = decomp.solve(&b) {
                let residual = (&a * &x - &b).norm();
                if residual <= 1e-9 && x.iter().all(|&f| f >= -1e-9) {
                    let c: f64 = subset
                        .iter()
                        .enumerate()
                        .map(|(col, &e)| {
                            let (i, j) = edges[e];
                            x[col].max(0.0) * cost(i, j)
                        })
                        .sum();
                    if c < best {
                        best = c;
                    }
                }
            }
        });
        best
    }

    fn enumerate_subsets(
        total: usize,
        k: usize,
        start: usize,
        depth: usize,
        chosen: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if depth == k {
            f(chosen);
            return;
        }
        for e in start..total {
            chosen[depth] = e;
            enumerate_subsets(total, k, e + 1, depth + 1, chosen, f);
        }
    }

    #[test]
    fn w2_matches_brute_force_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..20 {
            let mg = 1 + rng.gen_range(0..4usize);
            let mh = 1 + rng.gen_range(0..4usize);
            let g = random_measure(&mut rng, mg);
            let h = random_measure(&mut rng, mh);
            let plan = wasserstein2(&g, &h).unwrap();
            let brute = brute_force_cost(&g, &h);
            assert!(
                (plan.cost - brute).abs() <= 1e-9,
                "trial {trial}: ssp {} vs brute {}",
                plan.cost,
                brute
            );
        }
    }

    #[test]
    fn w2_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..30 {
            let (sg, sh, sk) = (
                1 + rng.gen_range(0..4usize),
                1 + rng.gen_range(0..4usize),
                1 + rng.gen_range(0..4usize),
            );
            let g = random_measure(&mut rng, sg);
            let h = random_measure(&mut rng, sh);
            let k = random_measure(&mut rng, sk);
            let gh = wasserstein2(&g, &h).unwrap().cost.sqrt();
            let hk = wasserstein2(&h, &k).unwrap().cost.sqrt();
            let gk = wasserstein2(&g, &k).unwrap().cost.sqrt();
            assert!(gk <= gh + hk + 1e-9, "triangle violated: {gk} > {gh} + {hk}");
        }
    }

    #[test]
    fn point_mass_closed_form() {
        let g = measure(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5]);
        assert_relative_eq!(w2_to_point_mass(&g, &[0.0, 0.0]), 1.0, epsilon = 1e-12);
        let d = MixingMeasure::dirac(vec![0.3, -0.4]);
        assert_eq!(w2_to_point_mass(&d, &[0.3, -0.4]), 0.0);
    }

    #[test]
    fn point_mass_closed_form_matches_transport() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let sz = 1 + rng.gen_range(0..6usize);
            let g = random_measure(&mut rng, sz);
            let mu = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let h = MixingMeasure::dirac(mu.clone());
            let plan = wasserstein2(&g, &h).unwrap();
            let closed = w2_to_point_mass(&g, &mu);
            assert!(
                (plan.cost.sqrt() - closed).abs() <= 1e-10,
                "transport {} vs closed form {}",
                plan.cost.sqrt(),
                closed
            );
        }
    }

    #[test]
    fn transport_cap_enforced() {
        let g = measure(
            (0..200).map(|i| vec![i as f64]).collect(),
            vec![1.0; 200],
        );
        let h = measure(
            (0..200).map(|i| vec![i as f64 + 0.5]).collect(),
            vec![1.0; 200],
        );
        assert!(matches!(
            wasserstein2_capped(&g, &h, 100),
            Err(Error::SizeLimit { .. })
        ));
    }

    #[test]
    fn regret_basics() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(regret(&a, &a).unwrap(), 0.0);
        let b = vec![vec![1.0, 0.0]];
        let c = vec![vec![0.0, 0.0]];
        assert_eq!(regret(&b, &c).unwrap(), 1.0);
        assert!(matches!(
            regret(&a, &c),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
