//! Maximization of the grid-constrained mixture log-likelihood over the
//! weight simplex, with optimality certificates from the gradient functional
//! `D(G, theta)` and the dual mixture density.
//!
//! Three algorithms are provided. `Em` is the classical multiplicative
//! update; it is globally monotone but slow near the simplex boundary.
//! `FrankWolfe` adds away steps with exact line search, which prunes
//! redundant atoms and converges linearly. `ProjNewton` (the default) warm
//! starts with EM, shapes the support with away steps, and finishes with a
//! damped Newton method on the active set; violating atoms found by a
//! full-grid dual sweep are re-admitted until the certificate holds.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::kernels::{log_gauss, row_log_mixture, LogKernelMatrix, LOG_2PI};
use crate::model::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Em,
    FrankWolfe,
    ProjNewton,
}

/// Solver settings. `max_iters` counts every inner iteration (EM sweep,
/// Frank-Wolfe step, or Newton step).
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub dual_gap_tol: f64,
    pub rel_loglik_tol: f64,
    pub prune_weight_tol: f64,
    /// EM iterations used to warm start `ProjNewton`.
    pub em_warm_start: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::ProjNewton,
            max_iters: 10_000,
            dual_gap_tol: 1e-6,
            rel_loglik_tol: 1e-10,
            prune_weight_tol: 1e-10,
            em_warm_start: 50,
        }
    }
}

impl SolverConfig {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::LengthMismatch {
                left: 0,
                right: 1,
                context: "max_iters must be at least 1",
            });
        }
        if !(self.dual_gap_tol > 0.0) || !(self.prune_weight_tol > 0.0) {
            return Err(Error::DeltaOutOfRange {
                delta: self.dual_gap_tol.min(self.prune_weight_tol),
                max_delta: f64::INFINITY,
            });
        }
        Ok(())
    }
}

/// Proof of (near-)optimality for a fitted weight vector.
#[derive(Debug, Clone)]
pub struct FitCertificate {
    /// Mean log-likelihood `(1/n) sum_i log f_i`.
    pub loglik: f64,
    /// Fitted per-row likelihoods `f_{G, Sigma_i}(X_i)`.
    pub fitted_l: Vec<f64>,
    /// The same likelihoods in log space (safe against underflow).
    pub fitted_log_l: Vec<f64>,
    /// `max_j D(G, a_j)` over the grid.
    pub dual_gap: f64,
    /// Inner iterations consumed.
    pub iters: usize,
    /// Mean log-likelihood after each iteration.
    pub trace: Vec<f64>,
    /// Whether `dual_gap <= dual_gap_tol` at exit.
    pub converged: bool,
}

/// A solved instance: simplex weights over the grid atoms plus certificate.
#[derive(Debug, Clone)]
pub struct Fit {
    pub weights: Vec<f64>,
    pub certificate: FitCertificate,
}

/// One EM sweep: `w_j' = w_j (1/n) sum_i exp(K_ij) / sum_k w_k exp(K_ik)`,
/// evaluated in shifted log space.
pub fn em_step(kernel: &LogKernelMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    let logf = row_log_mixture(kernel, weights)?;
    let n = kernel.n();
    let m = kernel.m();
    let mut update = vec![0.0; m];
    for i in 0..n {
        let lf = logf[i];
        for (u, &k) in update.iter_mut().zip(kernel.row(i)) {
            *u += (k - lf).exp();
        }
    }
    let mut out: Vec<f64> = weights
        .iter()
        .zip(&update)
        .map(|(&w, &u)| w * u / n as f64)
        .collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass { sum: total });
    }
    for w in &mut out {
        *w /= total;
    }
    Ok(out)
}

/// The gradient functional over grid atoms:
/// `D_j = (1/n) sum_i exp(K_ij) / f_i - 1`.
pub fn dual_values(kernel: &LogKernelMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    let logf = row_log_mixture(kernel, weights).map_err(|e| match e {
        Error::AllWeightsOnUnderflowedAtoms { row } => Error::ZeroLikelihoodRow { row },
        other => other,
    })?;
    let n = kernel.n();
    let m = kernel.m();
    let mut d = vec![0.0; m];
    for i in 0..n {
        let lf = logf[i];
        for (acc, &k) in d.iter_mut().zip(kernel.row(i)) {
            *acc += (k - lf).exp();
        }
    }
    for v in &mut d {
        *v = *v / n as f64 - 1.0;
    }
    Ok(d)
}

/// The dual mixture density
/// `psi(theta) = sum_i (L_i^{-1} / sum_k L_k^{-1}) phi_{Sigma_i}(X_i - theta)`.
/// Its global maximizers contain the support of every maximum-likelihood
/// measure.
pub fn dual_density(theta: &[f64], data: &Dataset, fitted_l: &[f64]) -> Result<f64> {
    if fitted_l.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: fitted_l.len(),
            right: data.len(),
            context: "fitted likelihoods vs dataset",
        });
    }
    if let Some(row) = fitted_l.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::ZeroLikelihoodRow { row });
    }
    let neg_log_l: Vec<f64> = fitted_l.iter().map(|l| -l.ln()).collect();
    let shift = neg_log_l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = neg_log_l
        .iter()
        .map(|v| (v - shift).exp())
        .sum::<f64>()
        .ln()
        + shift;
    let mut terms = Vec::with_capacity(data.len());
    for (obs, nl) in data.iter().zip(&neg_log_l) {
        let lphi = log_gauss(obs.x(), theta, obs.sigma())?;
        terms.push(nl - log_norm + lphi);
    }
    let tmax = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !tmax.is_finite() {
        return Ok(0.0);
    }
    Ok(tmax.exp() * terms.iter().map(|t| (t - tmax).exp()).sum::<f64>())
}

/// Upper bound on the gap to the grid-optimal mean log-likelihood implied by
/// a certificate: `log(1 + dual_gap)`.
pub fn loglik_suboptimality_bound(cert: &FitCertificate) -> f64 {
    cert.dual_gap.max(0.0).ln_1p()
}

/// Per-row lower bounds on the fitted likelihoods of any `q`-suboptimal
/// solution: `exp(-n q - log n) / (e sqrt(det 2 pi Sigma_i))`.
pub fn likelihood_floor(data: &Dataset, q: f64) -> Vec<f64> {
    let n = data.len() as f64;
    let p = data.dim() as f64;
    data.iter()
        .map(|obs| {
            let log_floor =
                -n * q - n.ln() - 1.0 - 0.5 * (p * LOG_2PI + obs.sigma().log_det());
            log_floor.exp()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// internal solver machinery, operating on the shifted kernel
// ---------------------------------------------------------------------------

struct Work {
    /// Shifted kernel `E[i*m + j] = exp(K_ij - row_max_i)`, row-major.
    e: Vec<f64>,
    n: usize,
    m: usize,
    /// Per-row shifted mixture values `f_i = sum_j w_j E_ij`.
    f: Vec<f64>,
    w: Vec<f64>,
    /// Indices with `w > 0` (superset allowed).
    active: Vec<usize>,
    mean_shift: f64,
    trace: Vec<f64>,
    iters: usize,
}

impl Work {
    fn new(kernel: &LogKernelMatrix) -> Result<Self> {
        let n = kernel.n();
        let m = kernel.m();
        let e = kernel.shifted_exp();
        let w = vec![1.0 / m as f64; m];
        let mean_shift = kernel.row_max().iter().sum::<f64>() / n as f64;
        let mut work = Self {
            e,
            n,
            m,
            f: vec![0.0; n],
            w,
            active: (0..m).collect(),
            mean_shift,
            trace: Vec::new(),
            iters: 0,
        };
        work.refresh_f()?;
        Ok(work)
    }

    fn refresh_f(&mut self) -> Result<()> {
        for i in 0..self.n {
            let row = &self.e[i * self.m..(i + 1) * self.m];
            let mut acc = 0.0;
            for &j in &self.active {
                acc += self.w[j] * row[j];
            }
            if !(acc > 0.0) {
                return Err(Error::AllWeightsOnUnderflowedAtoms { row: i });
            }
            self.f[i] = acc;
        }
        Ok(())
    }

    fn loglik(&self) -> f64 {
        self.f.iter().map(|v| v.ln()).sum::<f64>() / self.n as f64 + self.mean_shift
    }

    fn record(&mut self) {
        self.trace.push(self.loglik());
        self.iters += 1;
    }

    /// Gradient `g_j = (1/n) sum_i E_ij / f_i` restricted to `indices`.
    fn gradient_at(&self, indices: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; indices.len()];
        for i in 0..self.n {
            let row = &self.e[i * self.m..(i + 1) * self.m];
            let inv = 1.0 / self.f[i];
            for (acc, &j) in g.iter_mut().zip(indices) {
                *acc += row[j] * inv;
            }
        }
        for v in &mut g {
            *v /= self.n as f64;
        }
        g
    }

    /// Full-grid dual values at the current iterate.
    fn full_dual(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.m];
        for i in 0..self.n {
            let row = &self.e[i * self.m..(i + 1) * self.m];
            let inv = 1.0 / self.f[i];
            for (acc, &eij) in d.iter_mut().zip(row) {
                *acc += eij * inv;
            }
        }
        for v in &mut d {
            *v = *v / self.n as f64 - 1.0;
        }
        d
    }

    /// One EM sweep over the active set.
    fn em_sweep(&mut self) -> Result<()> {
        let g = self.gradient_at(&self.active);
        let mut total = 0.0;
        for (&j, &gj) in self.active.iter().zip(&g) {
            let nw = self.w[j] * gj;
            self.w[j] = nw;
            total += nw;
        }
        if !(total > 0.0) {
            return Err(Error::ZeroMass { sum: total });
        }
        for &j in &self.active {
            self.w[j] /= total;
        }
        self.refresh_f()
    }

    /// Exact line search maximizing `sum_i log(f_i + gamma df_i)` over
    /// `[0, gamma_max]`; `df` must keep `f + gamma df > 0` on the interval.
    fn line_search(&self, df: &impl Fn(usize) -> f64, gamma_max: f64) -> f64 {
        let phi_prime = |gamma: f64| {
            let mut s = 0.0;
            for i in 0..self.n {
                let d = df(i);
                s += d / (self.f[i] + gamma * d);
            }
            s
        };
        let d0 = phi_prime(0.0);
        if d0 <= 0.0 {
            return 0.0;
        }
        let dmax = phi_prime(gamma_max * (1.0 - 1e-12));
        if dmax >= 0.0 {
            return gamma_max;
        }
        // concave objective: phi' decreasing; bisect with Newton polish
        let mut lo = 0.0;
        let mut hi = gamma_max * (1.0 - 1e-12);
        let mut gamma = 0.5 * (lo + hi);
        for _ in 0..80 {
            let mut d1 = 0.0;
            let mut d2 = 0.0;
            for i in 0..self.n {
                let d = df(i);
                let den = self.f[i] + gamma * d;
                let r = d / den;
                d1 += r;
                d2 -= r * r;
            }
            if d1 > 0.0 {
                lo = gamma;
            } else {
                hi = gamma;
            }
            if d1.abs() < 1e-14 * self.n as f64 || hi - lo < 1e-16 * gamma_max.max(1.0) {
                break;
            }
            let newton = gamma - d1 / d2;
            gamma = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        gamma
    }

    /// One away-step Frank-Wolfe iteration on the active set. Returns the
    /// restricted dual gap before the step.
    fn fw_step(&mut self) -> Result<f64> {
        let g = self.gradient_at(&self.active);
        let mut s_pos = 0;
        let mut s_val = f64::NEG_INFINITY;
        let mut a_pos = 0;
        let mut a_val = f64::INFINITY;
        for (pos, (&j, &gj)) in self.active.iter().zip(&g).enumerate() {
            if gj > s_val {
                s_val = gj;
                s_pos = pos;
            }
            if self.w[j] > 0.0 && gj < a_val {
                a_val = gj;
                a_pos = pos;
            }
        }
        let gap = s_val - 1.0;
        if gap <= 0.0 {
            return Ok(gap);
        }
        let s_idx = self.active[s_pos];
        let a_idx = self.active[a_pos];
        let fw_gain = s_val - 1.0;
        let away_gain = 1.0 - a_val;
        let m = self.m;
        if fw_gain >= away_gain || self.w[a_idx] >= 1.0 {
            // toward vertex s: f <- f + gamma (E_s - f)
            let e = &self.e;
            let f = &self.f;
            let df = |i: usize| e[i * m + s_idx] - f[i];
            let gamma = self.line_search(&df, 1.0);
            if gamma >= 1.0 {
                for &j in &self.active {
                    self.w[j] = 0.0;
                }
                self.w[s_idx] = 1.0;
            } else if gamma > 0.0 {
                for &j in &self.active {
                    self.w[j] *= 1.0 - gamma;
                }
                self.w[s_idx] += gamma;
            }
            for i in 0..self.n {
                self.f[i] += gamma * (self.e[i * m + s_idx] - self.f[i]);
            }
        } else {
            // away from vertex a: f <- f + gamma (f - E_a)
            let wa = self.w[a_idx];
            let gamma_max = wa / (1.0 - wa);
            let e = &self.e;
            let f = &self.f;
            let df = |i: usize| f[i] - e[i * m + a_idx];
            let gamma = self.line_search(&df, gamma_max);
            if gamma >= gamma_max * (1.0 - 1e-12) {
                // drop step: atom leaves the support and the active list
                for &j in &self.active {
                    self.w[j] *= 1.0 + gamma_max;
                }
                self.w[a_idx] = 0.0;
                self.active.swap_remove(a_pos);
                for i in 0..self.n {
                    self.f[i] += gamma_max * (self.f[i] - self.e[i * m + a_idx]);
                }
            } else if gamma > 0.0 {
                for &j in &self.active {
                    self.w[j] *= 1.0 + gamma;
                }
                self.w[a_idx] -= gamma;
                for i in 0..self.n {
                    self.f[i] += gamma * (self.f[i] - self.e[i * m + a_idx]);
                }
            }
        }
        Ok(gap)
    }

    /// Shrinks the active list to the currently supported atoms.
    fn compact_active(&mut self) {
        self.active.retain(|&j| self.w[j] > 0.0);
    }

    /// Damped Newton iterations on the current support. Respects
    /// nonnegativity through a projection-arc backtracking search. Returns
    /// true if the restricted gap reached `tol`.
    fn newton_polish(&mut self, tol: f64, max_steps: usize, budget: &mut usize) -> Result<bool> {
        for _ in 0..max_steps {
            if *budget == 0 {
                return Ok(false);
            }
            let support: Vec<usize> = self
                .active
                .iter()
                .copied()
                .filter(|&j| self.w[j] > 0.0)
                .collect();
            if support.is_empty() {
                return Ok(false);
            }
            let g = self.gradient_at(&support);
            let gap = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 1.0;
            if gap <= tol {
                return Ok(true);
            }
            let k = support.len();
            // H = (1/n) R^T R with R_i = E_i[support] / f_i; this is minus the
            // restricted Hessian of the mean log-likelihood.
            let mut h: DMatrix<f64> = DMatrix::zeros(k, k);
            let mut row_buf = vec![0.0; k];
            for i in 0..self.n {
                let row = &self.e[i * self.m..(i + 1) * self.m];
                let inv = 1.0 / self.f[i];
                for (b, &j) in row_buf.iter_mut().zip(&support) {
                    *b = row[j] * inv;
                }
                for a in 0..k {
                    let ra = row_buf[a];
                    if ra == 0.0 {
                        continue;
                    }
                    for b in a..k {
                        h[(a, b)] += ra * row_buf[b];
                    }
                }
            }
            let inv_n = 1.0 / self.n as f64;
            for a in 0..k {
                for b in a..k {
                    let v = h[(a, b)] * inv_n;
                    h[(a, b)] = v;
                    h[(b, a)] = v;
                }
            }
            let ridge = 1e-10 * h.diagonal().max().max(1e-300);
            for a in 0..k {
                h[(a, a)] += ridge;
            }
            let chol = match Cholesky::new(h) {
                Some(c) => c,
                None => return Ok(false),
            };
            let g_vec = DVector::from_column_slice(&g);
            let ones = DVector::from_element(k, 1.0);
            let hig = chol.solve(&g_vec);
            let hi1 = chol.solve(&ones);
            let denom = hi1.sum();
            if denom.abs() < 1e-300 {
                return Ok(false);
            }
            let lambda = hig.sum() / denom;
            let dir = hig - hi1 * lambda;
            let ll0 = self.loglik();
            let w0: Vec<f64> = support.iter().map(|&j| self.w[j]).collect();
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial: Vec<f64> = w0
                    .iter()
                    .zip(dir.iter())
                    .map(|(&w, &d)| (w + alpha * d).max(0.0))
                    .collect();
                let total: f64 = trial.iter().sum();
                if total > 0.0 {
                    for t in &mut trial {
                        *t /= total;
                    }
                    for (&j, &t) in support.iter().zip(&trial) {
                        self.w[j] = t;
                    }
                    if self.refresh_f().is_ok() && self.loglik() > ll0 {
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // restore and give up on Newton for this round
                for (&j, &w) in support.iter().zip(&w0) {
                    self.w[j] = w;
                }
                self.refresh_f()?;
                return Ok(false);
            }
            self.record();
            *budget -= 1;
        }
        Ok(false)
    }
}

/// Maximizes the discretized objective over the simplex and certifies the
/// result. The final certificate is computed after pruning weights below
/// `prune_weight_tol` and renormalizing.
pub fn solve_weights(kernel: &LogKernelMatrix, config: &SolverConfig) -> Result<Fit> {
    config.validate()?;
    let mut work = Work::new(kernel)?;
    let mut budget = config.max_iters;
    match config.algorithm {
        Algorithm::Em => em_solve(&mut work, config, &mut budget)?,
        Algorithm::FrankWolfe => fw_solve(&mut work, config, &mut budget)?,
        Algorithm::ProjNewton => hybrid_solve(&mut work, config, &mut budget)?,
    }
    finalize(kernel, work, config)
}

fn em_solve(work: &mut Work, config: &SolverConfig, budget: &mut usize) -> Result<()> {
    let mut prev = work.loglik();
    while *budget > 0 {
        let d = work.full_dual();
        let gap = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if gap <= config.dual_gap_tol {
            return Ok(());
        }
        work.em_sweep()?;
        work.record();
        *budget -= 1;
        let ll = work.loglik();
        if config.rel_loglik_tol > 0.0
            && (ll - prev).abs() <= config.rel_loglik_tol * ll.abs().max(1.0)
        {
            return Ok(());
        }
        prev = ll;
    }
    Ok(())
}

fn fw_solve(work: &mut Work, config: &SolverConfig, budget: &mut usize) -> Result<()> {
    while *budget > 0 {
        let gap = work.fw_step()?;
        if gap <= config.dual_gap_tol {
            return Ok(());
        }
        work.record();
        *budget -= 1;
        if work.iters % 256 == 0 {
            work.refresh_f()?;
        }
    }
    Ok(())
}

fn hybrid_solve(work: &mut Work, config: &SolverConfig, budget: &mut usize) -> Result<()> {
    let tol = config.dual_gap_tol;
    // Phase 1: EM warm start over the full grid.
    for _ in 0..config.em_warm_start.min(*budget) {
        work.em_sweep()?;
        work.record();
        *budget -= 1;
    }
    // Phase 2: confine attention to the heaviest atoms; dropped atoms are
    // recoverable through the violator sweep below.
    let keep = (4 * work.n).max(512).min(work.m);
    if work.m > keep {
        let mut order: Vec<usize> = (0..work.m).collect();
        order.sort_by(|&a, &b| work.w[b].partial_cmp(&work.w[a]).unwrap());
        for &j in &order[keep..] {
            work.w[j] = 0.0;
        }
        let total: f64 = work.w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroMass { sum: total });
        }
        for w in &mut work.w {
            *w /= total;
        }
        work.active = order[..keep].to_vec();
        work.refresh_f()?;
    }
    // Phase 3: alternate support shaping (EM + away steps), Newton polish,
    // and full-grid violator sweeps.
    let newton_cap = 600;
    for _outer in 0..config.max_iters {
        if *budget == 0 {
            break;
        }
        // EM smooths weights cheaply; away steps produce hard zeros.
        for _ in 0..20.min(*budget) {
            work.em_sweep()?;
            work.record();
            *budget -= 1;
        }
        for _ in 0..60 {
            if *budget == 0 {
                break;
            }
            let restricted_gap = work.fw_step()?;
            work.record();
            *budget -= 1;
            if restricted_gap <= 0.5 * tol {
                break;
            }
        }
        work.compact_active();
        if work.active.len() <= newton_cap {
            work.newton_polish(0.5 * tol, 40, budget)?;
        }
        work.refresh_f()?;
        // Full-grid certificate sweep.
        let d = work.full_dual();
        let gap = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if std::env::var("NPMIX_DEBUG_SOLVER").is_ok() {
            eprintln!(
                "outer {_outer}: gap {gap:.3e} active {} budget {budget} iters {}",
                work.active.len(),
                work.iters
            );
        }
        if gap <= tol {
            return Ok(());
        }
        // Re-admit the strongest violators outside the active set. Compact
        // first: an index may only enter the list once.
        work.compact_active();
        let mut violators: Vec<usize> = (0..work.m)
            .filter(|&j| d[j] > 0.25 * tol && work.w[j] == 0.0)
            .collect();
        violators.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap());
        violators.truncate(64);
        if violators.is_empty() {
            // gap sits between tol/4 and tol on active atoms; continue
            continue;
        }
        let seed_mass = 1e-4;
        for &j in &work.active {
            work.w[j] *= 1.0 - seed_mass;
        }
        let share = seed_mass / violators.len() as f64;
        for &j in &violators {
            work.w[j] = share;
            work.active.push(j);
        }
        work.refresh_f()?;
    }
    Ok(())
}

fn finalize(kernel: &LogKernelMatrix, mut work: Work, config: &SolverConfig) -> Result<Fit> {
    // prune, renormalize, then certify the pruned weights
    for w in &mut work.w {
        if *w < config.prune_weight_tol {
            *w = 0.0;
        }
    }
    let total: f64 = work.w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass { sum: total });
    }
    for w in &mut work.w {
        *w /= total;
    }
    let fitted_log_l = row_log_mixture(kernel, &work.w)?;
    let fitted_l: Vec<f64> = fitted_log_l.iter().map(|v| v.exp()).collect();
    let loglik = fitted_log_l.iter().sum::<f64>() / fitted_log_l.len() as f64;
    let duals = dual_values(kernel, &work.w)?;
    let dual_gap = duals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let converged = dual_gap <= config.dual_gap_tol;
    Ok(Fit {
        weights: work.w,
        certificate: FitCertificate {
            loglik,
            fitted_l,
            fitted_log_l,
            dual_gap,
            iters: work.iters,
            trace: work.trace,
            converged,
        },
    })
}
