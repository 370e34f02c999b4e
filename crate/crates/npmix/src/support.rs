//! Data-driven support regions for the estimator (convex hull, bounding box,
//! or spectral ball), hypercube-corner grids over them, and the
//! discretization-error bound that converts a grid certificate into a
//! statement about the continuous problem.

use std::collections::HashSet;

use crate::model::{euclidean, Dataset};
use crate::{Error, Result};

/// Default cap on the number of grid atoms.
pub const DEFAULT_GRID_CAP: usize = 2_000_000;

/// Relative tolerance for detecting proportional covariances.
pub const PROPORTIONALITY_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum RegionShape {
    /// Convex hull of the data, stored by its vertices.
    Hull { vertices: Vec<Vec<f64>> },
    /// Axis-aligned box, `lower <= upper` coordinatewise.
    BBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
}

/// A support region together with its exact diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub shape: RegionShape,
    pub diameter: f64,
}

/// Region selection mode. `Auto` picks the tightest bound the covariance
/// structure allows: hull for proportional covariances, bounding box for
/// diagonal ones, and the spectral ball otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionMode {
    Auto,
    Hull,
    BBox,
    Ball,
}

impl Region {
    pub fn dim(&self) -> usize {
        match &self.shape {
            RegionShape::Hull { vertices } => vertices[0].len(),
            RegionShape::BBox { lower, .. } => lower.len(),
            RegionShape::Ball { center, .. } => center.len(),
        }
    }

    /// Smallest axis-aligned box containing the region.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            RegionShape::Hull { vertices } => {
                let p = vertices[0].len();
                let mut lower = vec![f64::INFINITY; p];
                let mut upper = vec![f64::NEG_INFINITY; p];
                for v in vertices {
                    for d in 0..p {
                        lower[d] = lower[d].min(v[d]);
                        upper[d] = upper[d].max(v[d]);
                    }
                }
                (lower, upper)
            }
            RegionShape::BBox { lower, upper } => (lower.clone(), upper.clone()),
            RegionShape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Euclidean distance from a point to the region (zero inside).
    pub fn distance(&self, point: &[f64]) -> f64 {
        match &self.shape {
            RegionShape::Hull { vertices } => distance_to_hull(point, vertices),
            RegionShape::BBox { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&x, (&l, &u))| {
                    let d = if x < l {
                        l - x
                    } else if x > u {
                        x - u
                    } else {
                        0.0
                    };
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            RegionShape::Ball { center, radius } => (euclidean(point, center) - radius).max(0.0),
        }
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.distance(point) <= tol
    }
}

/// Computes the support region for the grid.
///
/// In `Auto` mode: proportional covariances give the convex hull of the
/// data; all-diagonal covariances give the minimum axis-aligned bounding
/// box; otherwise the ball centered at the data mean with radius
/// `kappa * r`, where `kappa = k_upper / k_lower` and `r` is the largest
/// distance from an observation to the center.
pub fn support_region(data: &Dataset, mode: RegionMode) -> Region {
    let mode = match mode {
        RegionMode::Auto => {
            if covariances_proportional(data) {
                RegionMode::Hull
            } else if data.iter().all(|o| o.sigma().is_diagonal()) {
                RegionMode::BBox
            } else {
                RegionMode::Ball
            }
        }
        m => m,
    };
    match mode {
        RegionMode::Hull => {
            let points: Vec<Vec<f64>> = data.iter().map(|o| o.x().to_vec()).collect();
            let vertices = hull_vertices(points);
            let diameter = max_pairwise_distance(&vertices);
            Region {
                shape: RegionShape::Hull { vertices },
                diameter,
            }
        }
        RegionMode::BBox => {
            let p = data.dim();
            let mut lower = vec![f64::INFINITY; p];
            let mut upper = vec![f64::NEG_INFINITY; p];
            for o in data.iter() {
                for d in 0..p {
                    lower[d] = lower[d].min(o.x()[d]);
                    upper[d] = upper[d].max(o.x()[d]);
                }
            }
            let diameter = euclidean(&lower, &upper);
            Region {
                shape: RegionShape::BBox { lower, upper },
                diameter,
            }
        }
        RegionMode::Ball => {
            let p = data.dim();
            let n = data.len() as f64;
            let mut center = vec![0.0; p];
            for o in data.iter() {
                for d in 0..p {
                    center[d] += o.x()[d] / n;
                }
            }
            let r = data
                .iter()
                .map(|o| euclidean(o.x(), &center))
                .fold(0.0, f64::max);
            let kappa = data.k_upper() / data.k_lower();
            let radius = (kappa * r).max(f64::MIN_POSITIVE);
            Region {
                shape: RegionShape::Ball { center, radius },
                diameter: 2.0 * radius,
            }
        }
        RegionMode::Auto => unreachable!(),
    }
}

fn covariances_proportional(data: &Dataset) -> bool {
    let p = data.dim();
    if data.len() <= 1 {
        return true;
    }
    let reference = data.obs(0).sigma().materialize();
    let ref_trace: f64 = (0..p).map(|i| reference[(i, i)]).sum();
    for o in data.iter().skip(1) {
        let m = o.sigma().materialize();
        let trace: f64 = (0..p).map(|i| m[(i, i)]).sum();
        for i in 0..p {
            for j in 0..p {
                let a = reference[(i, j)] / ref_trace;
                let b = m[(i, j)] / trace;
                if (a - b).abs() > PROPORTIONALITY_REL_TOL * (a.abs().max(b.abs()).max(1.0 / p as f64)) {
                    return false;
                }
            }
        }
    }
    true
}

/// Convex-hull vertex reduction. Exact monotone chain in the plane; in other
/// dimensions the full point set is kept (correct, merely less economical).
fn hull_vertices(mut points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    if points.is_empty() || points[0].len() != 2 || points.len() < 3 {
        return points;
    }
    let cross = |o: &[f64], a: &[f64], b: &[f64]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<Vec<f64>> = Vec::with_capacity(points.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec<f64>>> = if pass == 0 {
            Box::new(points.iter())
        } else {
            Box::new(points.iter().rev())
        };
        for pt in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], pt) <= 0.0
            {
                hull.pop();
            }
            hull.push(pt.clone());
        }
        hull.pop();
    }
    if hull.is_empty() {
        // All points collinear; keep the extremes.
        hull = vec![points[0].clone(), points[points.len() - 1].clone()];
    }
    hull
}

fn max_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max(euclidean(a, b));
        }
    }
    d
}

/// Euclidean distance from `point` to the convex hull of `vertices`, via
/// away-step Frank-Wolfe on the projection problem. Works in any dimension.
pub(crate) fn distance_to_hull(point: &[f64], vertices: &[Vec<f64>]) -> f64 {
    let p = point.len();
    if vertices.len() == 1 {
        return euclidean(point, &vertices[0]);
    }
    // Start from the vertex nearest to the query point.
    let mut weights = vec![0.0; vertices.len()];
    let start = (0..vertices.len())
        .min_by(|&a, &b| {
            euclidean(point, &vertices[a])
                .partial_cmp(&euclidean(point, &vertices[b]))
                .unwrap()
        })
        .unwrap();
    weights[start] = 1.0;
    let mut current = vertices[start].clone();
    let scale = max_pairwise_distance(vertices).max(1.0);
    let tol = 1e-10 * scale * scale;
    for _ in 0..200 {
        // gradient of 1/2 |c - point|^2 is (c - point)
        let grad: Vec<f64> = current.iter().zip(point).map(|(c, x)| c - x).collect();
        let score = |v: &Vec<f64>| grad.iter().zip(v).map(|(g, vi)| g * vi).sum::<f64>();
        let mut s_idx = 0;
        let mut s_val = f64::INFINITY;
        let mut a_idx = 0;
        let mut a_val = f64::NEG_INFINITY;
        for (j, v) in vertices.iter().enumerate() {
            let sc = score(v);
            if sc < s_val {
                s_val = sc;
                s_idx = j;
            }
            if weights[j] > 0.0 && sc > a_val {
                a_val = sc;
                a_idx = j;
            }
        }
        let current_score = score(&current);
        let fw_gain = current_score - s_val;
        if fw_gain <= tol {
            break;
        }
        let away_gain = a_val - current_score;
        let (dir, gamma_max, toward, drop_idx): (Vec<f64>, f64, usize, Option<usize>) =
            if fw_gain >= away_gain {
                let d: Vec<f64> = vertices[s_idx]
                    .iter()
                    .zip(&current)
                    .map(|(v, c)| v - c)
                    .collect();
                (d, 1.0, s_idx, None)
            } else {
                let d: Vec<f64> = current
                    .iter()
                    .zip(&vertices[a_idx])
                    .map(|(c, v)| c - v)
                    .collect();
                let wa: f64 = weights[a_idx];
                let head = (1.0 - wa).max(f64::MIN_POSITIVE);
                (d, wa / head, a_idx, Some(a_idx))
            };
        // exact line search for the quadratic objective
        let num: f64 = dir.iter().zip(&grad).map(|(d, g)| -d * g).sum();
        let den: f64 = dir.iter().map(|d| d * d).sum();
        if den <= 0.0 {
            break;
        }
        let gamma = (num / den).clamp(0.0, gamma_max);
        if gamma <= 0.0 {
            break;
        }
        if drop_idx.is_some() {
            // away step: w <- (1 + gamma) w - gamma e_a
            let a = drop_idx.unwrap();
            for w in weights.iter_mut() {
                *w *= 1.0 + gamma;
            }
            weights[a] -= gamma;
            if weights[a] < 1e-15 {
                weights[a] = 0.0;
            }
        } else {
            for w in weights.iter_mut() {
                *w *= 1.0 - gamma;
            }
            weights[toward] += gamma;
        }
        for (c, d) in current.iter_mut().zip(&dir) {
            *c += gamma * d;
        }
        let _ = p;
    }
    euclidean(&current, point)
}

/// A grid of hypercube corners covering a region.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub delta: f64,
    pub atoms: Vec<Vec<f64>>,
}

/// Builds the corner lattice of a hypercube covering of the region with the
/// default atom cap.
pub fn build_grid(region: &Region, delta: f64) -> Result<GridSpec> {
    build_grid_capped(region, delta, DEFAULT_GRID_CAP)
}

/// Builds the covering grid, failing with [`Error::GridTooLarge`] when the
/// atom count would exceed `cap`.
///
/// The lattice is anchored at the region's lower corner. A hypercube is kept
/// when its center lies within `delta/2 * sqrt(p)` of the region, which is
/// sufficient for the cubes to cover it; the atoms are the deduplicated
/// corners of the kept cubes.
pub fn build_grid_capped(region: &Region, delta: f64, cap: usize) -> Result<GridSpec> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::DeltaOutOfRange {
            delta,
            max_delta: f64::INFINITY,
        });
    }
    let p = region.dim();
    let (lower, upper) = region.bounding_box();
    let cells: Vec<usize> = lower
        .iter()
        .zip(&upper)
        .map(|(&l, &u)| (((u - l) / delta).ceil() as usize).max(1))
        .collect();
    let cube_count = cells.iter().fold(1.0f64, |a, &c| a * c as f64);
    if cube_count > 1e12 {
        return Err(Error::GridTooLarge {
            atoms: usize::MAX,
            cap,
        });
    }
    let margin = 0.5 * delta * (p as f64).sqrt();

    let mut corner_set: HashSet<Vec<i64>> = HashSet::new();
    let mut cube = vec![0usize; p];
    let mut center = vec![0.0; p];
    for flat in 0..cube_count as u64 {
        let mut rem = flat;
        for d in 0..p {
            cube[d] = (rem % cells[d] as u64) as usize;
            rem /= cells[d] as u64;
        }
        for d in 0..p {
            center[d] = lower[d] + (cube[d] as f64 + 0.5) * delta;
        }
        if region.distance(&center) <= margin + 1e-12 * delta {
            // Emit the 2^p corners of this cube as integer lattice indices.
            for mask in 0..(1usize << p) {
                let mut idx = Vec::with_capacity(p);
                for d in 0..p {
                    idx.push(cube[d] as i64 + ((mask >> d) & 1) as i64);
                }
                corner_set.insert(idx);
                if corner_set.len() > cap {
                    return Err(Error::GridTooLarge {
                        atoms: corner_set.len(),
                        cap,
                    });
                }
            }
        }
    }
    let mut indices: Vec<Vec<i64>> = corner_set.into_iter().collect();
    indices.sort();
    let atoms: Vec<Vec<f64>> = indices
        .iter()
        .map(|idx| {
            idx.iter()
                .zip(&lower)
                .map(|(&k, &l)| l + k as f64 * delta)
                .collect()
        })
        .collect();
    Ok(GridSpec { delta, atoms })
}

/// Largest admissible `delta` for the discretization bound:
/// `sqrt(3/(4p)) * k_lower / D`.
pub fn max_valid_delta(p: usize, k_lower: f64, diameter: f64) -> f64 {
    if diameter <= 0.0 {
        return f64::INFINITY;
    }
    (3.0 / (4.0 * p as f64)).sqrt() * k_lower / diameter
}

/// Upper bound `p k_lower^{-2} (2 D^2 + 1/2) delta^2` on the mean
/// log-likelihood gap between the grid-constrained and unconstrained
/// estimators, valid for `delta` in `(0, sqrt(3/(4p)) k_lower / D)`.
pub fn discretization_bound(p: usize, k_lower: f64, diameter: f64, delta: f64) -> Result<f64> {
    let max_delta = max_valid_delta(p, k_lower, diameter);
    if !(delta > 0.0 && delta < max_delta) {
        return Err(Error::DeltaOutOfRange { delta, max_delta });
    }
    Ok(p as f64 / (k_lower * k_lower) * (2.0 * diameter * diameter + 0.5) * delta * delta)
}

/// Chooses a default grid width: the largest `delta` whose discretization
/// bound does not exceed `(log n)^{p+1} / n`, clipped into the bound's
/// validity range, then coarsened as needed so the grid fits under `cap`
/// atoms. Returns the grid along with whether the likelihood target was met.
pub fn auto_grid(region: &Region, data: &Dataset, cap: usize) -> Result<(GridSpec, bool)> {
    let p = data.dim();
    let n = data.len() as f64;
    let d = region.diameter;
    if d <= 0.0 {
        // Degenerate region (single point): one atom suffices.
        let (lower, _) = region.bounding_box();
        return Ok((
            GridSpec {
                delta: 1.0,
                atoms: vec![lower],
            },
            true,
        ));
    }
    let target = n.ln().max(0.0).powi(p as i32 + 1) / n;
    let coeff = p as f64 / (data.k_lower() * data.k_lower()) * (2.0 * d * d + 0.5);
    let mut delta = if target > 0.0 {
        (target / coeff).sqrt()
    } else {
        d / 16.0
    };
    let max_delta = max_valid_delta(p, data.k_lower(), d);
    let mut target_met = true;
    if delta >= max_delta {
        delta = max_delta * (1.0 - 1e-9);
        target_met = discretization_bound(p, data.k_lower(), d, delta)
            .map(|b| b <= target)
            .unwrap_or(false);
    }
    // Never grid finer than needed to resolve the region thousands of times
    // over; keeps degenerate tiny targets from exploding the lattice.
    let floor = d / 4096.0;
    if delta < floor {
        delta = floor;
        target_met = false;
    }
    for _ in 0..64 {
        match build_grid_capped(region, delta, cap) {
            Ok(grid) => {
                if !target_met || discretization_bound(p, data.k_lower(), d, delta).is_err() {
                    target_met = false;
                }
                return Ok((grid, target_met));
            }
            Err(Error::GridTooLarge { .. }) => {
                delta *= 1.5;
                target_met = false;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::GridTooLarge { atoms: 0, cap })
}
