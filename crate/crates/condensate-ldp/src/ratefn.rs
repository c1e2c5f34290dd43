//! The single-jump energy landscape and the non-convex rate function.
//!
//! Everything revolves around
//!
//! ```text
//! g_s(y) = y^α + (s − y)²/(2σ²),
//! ```
//!
//! the cost of one jump of rescaled size y plus the Gaussian cost of the
//! remaining moderate deviation, and the true rate function of the rescaled
//! maximum,
//!
//! ```text
//! f_s(y) = y^α + inf_{z ∈ [0, y]} f_{s−y}(z),
//! ```
//!
//! a Bellman-type fixed point that can drop strictly below g_s once several
//! comparably-sized jumps become cheaper than one.
//!
//! Three thresholds organise the picture:
//! - `s0`: below it g'_s has no zero and g_s increases on [0, ∞);
//! - `s1`: the condensed local minimum g_s(y₂(s)) ties with g_s(0);
//! - `s2`: above it the set J_s = {y : f_s(y) < g_s(y)} is non-empty.
//!
//! `f_table` computes f by monotone value iteration on an aligned (s, y) grid;
//! `rate_max` evaluates f exactly at a single point through the capped-parts
//! reduction (all interior parts of an optimal tail sit at the cap, by
//! concavity of y ↦ y^α), which doubles as an independent cross-check of the
//! table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;
use crate::numeric::{self, NumericError};

#[derive(Debug, Error)]
pub enum RatefnError {
    #[error("y must be >= 0, got {0}")]
    NegativeY(f64),
    #[error("g' and g'' need y > 0 (they blow up at 0)")]
    DerivativeAtZero,
    #[error("vector of parts must be nonincreasing and nonnegative")]
    NotNonincreasing,
    #[error("grid too coarse: step {step} does not resolve y_* = {y_star}")]
    GridTooCoarse { step: f64, y_star: f64 },
    #[error("grid spec invalid: {0}")]
    GridSpec(String),
    #[error(
        "no upper bracket for s2 below s = {tried}; this contradicts g_t(z) − g_t(0) → −∞ as t → ∞"
    )]
    S2BracketFailure { tried: f64 },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Closed-form thresholds of the landscape.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Thresholds {
    /// Inflection point y_* = ((1−α)·α·σ²)^γ of g_s (independent of s).
    pub y_star: f64,
    /// s0 = (1/γ)(ασ²)^γ(1−α)^{γ−1}: two critical points appear above it.
    pub s0: f64,
    /// s1 = (1/γ)(σ²)^γ(2−2α)^{γ−1}: the two local minima of g tie here.
    pub s1: f64,
}

/// Per-s analysis of g_s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Landscape {
    pub s: f64,
    pub y_star: f64,
    pub s0: f64,
    pub s1: f64,
    /// Local maximizer of g_s in (0, y_*), present iff s > s0.
    pub y1: Option<f64>,
    /// Local minimizer of g_s in (y_*, s), present iff s > s0.
    pub y2: Option<f64>,
    /// Smallest y > 0 with g_s(y) = g_s(0), present iff s >= s1.
    pub y0: Option<f64>,
    pub global_min_location: f64,
    pub global_min_value: f64,
    /// True when both branches of the minimum agree to rounding (s = s1).
    pub tie: bool,
}

fn check_y(y: f64) -> Result<(), RatefnError> {
    if y < 0.0 {
        Err(RatefnError::NegativeY(y))
    } else {
        Ok(())
    }
}

pub(crate) fn g_value(p: &ModelParams, s: f64, y: f64) -> f64 {
    let r = s - y;
    y.powf(p.alpha) + r * r / (2.0 * p.sigma2)
}

fn g_deriv(p: &ModelParams, s: f64, y: f64) -> f64 {
    p.alpha * y.powf(p.alpha - 1.0) - (s - y) / p.sigma2
}

/// g_s(y) = y^α + (s−y)²/(2σ²).
pub fn g(p: &ModelParams, s: f64, y: f64) -> Result<f64, RatefnError> {
    check_y(y)?;
    Ok(g_value(p, s, y))
}

/// g'_s(y) = α·y^{α−1} − (s−y)/σ², for y > 0.
pub fn g_prime(p: &ModelParams, s: f64, y: f64) -> Result<f64, RatefnError> {
    check_y(y)?;
    if y == 0.0 {
        return Err(RatefnError::DerivativeAtZero);
    }
    Ok(g_deriv(p, s, y))
}

/// g''_s(y) = −α(1−α)·y^{α−2} + 1/σ², for y > 0 (independent of s).
pub fn g_second(p: &ModelParams, _s: f64, y: f64) -> Result<f64, RatefnError> {
    check_y(y)?;
    if y == 0.0 {
        return Err(RatefnError::DerivativeAtZero);
    }
    Ok(-p.alpha * (1.0 - p.alpha) * y.powf(p.alpha - 2.0) + 1.0 / p.sigma2)
}

/// y_*, s0 and s1 in closed form.
pub fn thresholds(p: &ModelParams) -> Thresholds {
    let (a, g_) = (p.alpha, p.gamma);
    let y_star = ((1.0 - a) * a * p.sigma2).powf(g_);
    let s0 = (1.0 / g_) * (a * p.sigma2).powf(g_) * (1.0 - a).powf(g_ - 1.0);
    let s1 = (1.0 / g_) * p.sigma2.powf(g_) * (2.0 - 2.0 * a).powf(g_ - 1.0);
    Thresholds { y_star, s0, s1 }
}

const ROOT_TOL: f64 = 1e-12;

/// The two zeros of g'_s: local maximizer y1 ∈ (0, y_*) and local minimizer
/// y2 ∈ (y_*, s). None for s < s0; the degenerate double root (y_*, y_*) at
/// s = s0.
pub fn critical_points(p: &ModelParams, s: f64) -> Option<(f64, f64)> {
    let th = thresholds(p);
    if s < th.s0 {
        return None;
    }
    if s == th.s0 {
        return Some((th.y_star, th.y_star));
    }
    // g' falls from +∞ to a negative value at y_*, then rises to g'(s) > 0
    let mut lo = th.y_star;
    loop {
        lo *= 1e-3;
        if g_deriv(p, s, lo) > 0.0 {
            break;
        }
        if lo < 1e-280 {
            break;
        }
    }
    if g_deriv(p, s, th.y_star) >= 0.0 {
        // s so close to s0 that the dip is below root-finder resolution
        return Some((th.y_star, th.y_star));
    }
    let y1 = numeric::bracketed_root(|y| g_deriv(p, s, y), lo, th.y_star, ROOT_TOL).ok()?;
    let y2 = numeric::bracketed_root(|y| g_deriv(p, s, y), th.y_star, s, ROOT_TOL).ok()?;
    Some((y1, y2))
}

/// Smallest y > 0 with g_s(y) = g_s(0); finite exactly for s >= s1.
pub fn y0(p: &ModelParams, s: f64) -> Option<f64> {
    let th = thresholds(p);
    if s < th.s1 {
        return None;
    }
    let (y1, y2) = critical_points(p, s)?;
    let base = g_value(p, s, 0.0);
    let h = |y: f64| g_value(p, s, y) - base;
    if h(y2) >= 0.0 {
        // only possible when s = s1 up to rounding: the crossing sits at y2
        return Some(y2);
    }
    numeric::bracketed_root(h, y1, y2, ROOT_TOL).ok()
}

/// min over t in [s1, hi] of t + y0(t): grid scan plus golden refinement.
/// The predicate "J_s non-empty" is exactly min < s, because y = s − t turns
/// y0(s−y) < y < s−s1 into t + y0(t) < s.
fn min_t_plus_y0(p: &ModelParams, hi: f64) -> f64 {
    let th = thresholds(p);
    let lo = th.s1 * (1.0 + 1e-12);
    if hi <= lo {
        return f64::INFINITY;
    }
    let phi = |t: f64| t + y0(p, t).unwrap_or(f64::INFINITY);
    let points = 257usize;
    let step = (hi - lo) / (points - 1) as f64;
    let mut best_i = 0usize;
    let mut best = f64::INFINITY;
    for i in 0..points {
        let v = phi(lo + step * i as f64);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    let t = numeric::golden_min(phi, a, b, 120);
    phi(t).min(best)
}

/// The threshold s2 above which f_s and g_s differ somewhere.
///
/// Bisection on s against the monotone predicate "∃ y ∈ (0, s−s1) with
/// y0(s−y) < y", evaluated through a refining grid over t = s − y; absolute
/// tolerance 1e−8. Errors loudly if no upper bracket exists (it must).
pub fn s2(p: &ModelParams) -> Result<f64, RatefnError> {
    let th = thresholds(p);
    let predicate = |s: f64| min_t_plus_y0(p, s) < s;
    let mut lo = th.s1;
    let mut hi = th.s1 * 2.0;
    let mut tries = 0;
    while !predicate(hi) {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(RatefnError::S2BracketFailure { tried: hi });
        }
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if predicate(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s2 = 0.5 * (lo + hi);
    debug_assert!(s2 > th.s1 && s2.is_finite());
    Ok(s2)
}

/// Full per-s landscape.
pub fn landscape(p: &ModelParams, s: f64) -> Landscape {
    let th = thresholds(p);
    let crit = critical_points(p, s);
    let y0v = y0(p, s);
    let v0 = g_value(p, s, 0.0);
    let tol = 1e-12 * v0.abs().max(1.0);
    let (loc, val, tie) = match crit {
        Some((_, y2)) => {
            let v2 = g_value(p, s, y2);
            if v2 <= v0 + tol {
                // ties resolve to the condensed branch
                (y2, v2, (v2 - v0).abs() <= tol)
            } else {
                (0.0, v0, false)
            }
        }
        None => (0.0, v0, false),
    };
    Landscape {
        s,
        y_star: th.y_star,
        s0: th.s0,
        s1: th.s1,
        y1: crit.map(|c| c.0),
        y2: crit.map(|c| c.1),
        y0: y0v,
        global_min_location: loc,
        global_min_value: val,
        tie,
    }
}

/// F_s of a finite nonincreasing sequence: Σ x_j^α + (s − Σ x_j)²/(2σ²).
pub fn f_finite(p: &ModelParams, s: f64, parts: &[f64]) -> Result<f64, RatefnError> {
    for w in parts.windows(2) {
        if w[1] > w[0] {
            return Err(RatefnError::NotNonincreasing);
        }
    }
    if parts.last().is_some_and(|&x| x < 0.0) {
        return Err(RatefnError::NotNonincreasing);
    }
    let mass: f64 = parts.iter().sum();
    let energy: f64 = parts.iter().map(|x| x.powf(p.alpha)).sum();
    let r = s - mass;
    Ok(energy + r * r / (2.0 * p.sigma2))
}

/// Minimum of F_s over all admissible sequences, with its location.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InfF {
    pub value: f64,
    /// 0 in the spread phase, y2(s) in the condensed phase (ties condense).
    pub argmin: f64,
    pub tie: bool,
}

/// inf F_s = min(g_s(0), g_s(y2(s))): interior candidates of g_s on [0, s]
/// are only 0 and y2.
pub fn inf_f(p: &ModelParams, s: f64) -> InfF {
    let l = landscape(p, s);
    InfF {
        value: l.global_min_value,
        argmin: l.global_min_location,
        tie: l.tie,
    }
}

/// Minimum of g_u over [0, cap] in closed form via the landscape:
/// the only candidates are 0 and min(cap, y2(u)).
fn min_g_on(p: &ModelParams, u: f64, cap: f64) -> f64 {
    let v0 = u * u / (2.0 * p.sigma2);
    if cap <= 0.0 {
        return v0;
    }
    match critical_points(p, u) {
        Some((_, y2)) => v0.min(g_value(p, u, y2.min(cap))),
        None => v0,
    }
}

/// Best completion cost: inf of F_t over sequences whose parts all lie in
/// [0, cap]. By concavity of x ↦ x^α the optimal tail uses as many parts at
/// the cap as it can plus one remainder, so the infimum is a minimum over the
/// number k of capped parts.
fn best_completion(p: &ModelParams, t: f64, cap: f64) -> f64 {
    if cap <= 0.0 || t <= 0.0 {
        return t * t / (2.0 * p.sigma2);
    }
    let cap_cost = cap.powf(p.alpha);
    let mut best = f64::INFINITY;
    let mut k = 0u64;
    loop {
        let u = t - k as f64 * cap;
        best = best.min(k as f64 * cap_cost + min_g_on(p, u, cap));
        if u <= 0.0 {
            break;
        }
        k += 1;
    }
    best
}

/// f_s(y) − inf F_s: the rate of the conditioned maximum, evaluated exactly
/// at one point through the capped-parts reduction.
pub fn rate_max(p: &ModelParams, s: f64, y: f64) -> Result<f64, RatefnError> {
    check_y(y)?;
    let f = if y == 0.0 {
        s * s / (2.0 * p.sigma2)
    } else {
        y.powf(p.alpha) + best_completion(p, s - y, y)
    };
    Ok((f - inf_f(p, s).value).max(0.0))
}

/// The gap set J_s = {y ∈ (0, s−s1): y0(s−y) < y} as a union of intervals.
///
/// Empty for s ≤ s2. Sign changes of d(y) = y − y0(s−y) are located on a
/// grid (seeded with the exact interior minimizer of t + y0(t) so a thin gap
/// cannot fall between nodes) and refined by bracketed root finding.
pub fn gap_set(p: &ModelParams, s: f64) -> Vec<(f64, f64)> {
    let th = thresholds(p);
    let width = s - th.s1;
    if width <= 0.0 || min_t_plus_y0(p, s) >= s {
        return Vec::new();
    }
    let d = |y: f64| y - y0(p, s - y).unwrap_or(f64::INFINITY);
    let n = 2048usize;
    let eps = width * 1e-9;
    let mut nodes: Vec<f64> = (0..=n)
        .map(|i| eps + (width - 2.0 * eps) * i as f64 / n as f64)
        .collect();
    // seed the known interior point of J_s
    let tmin = numeric::golden_min(
        |t| t + y0(p, t).unwrap_or(f64::INFINITY),
        th.s1 * (1.0 + 1e-12),
        s,
        120,
    );
    let seed = s - tmin;
    if seed > eps && seed < width - eps {
        nodes.push(seed);
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let mut intervals = Vec::new();
    let mut open: Option<f64> = None;
    let mut prev = nodes[0];
    let mut prev_d = d(prev);
    if prev_d > 0.0 {
        open = Some(0.0);
    }
    for &x in &nodes[1..] {
        let dx = d(x);
        if prev_d <= 0.0 && dx > 0.0 {
            let a = numeric::bracketed_root(d, prev, x, ROOT_TOL).unwrap_or(prev);
            open = Some(a);
        } else if prev_d > 0.0 && dx <= 0.0 {
            let b = numeric::bracketed_root(d, prev, x, ROOT_TOL).unwrap_or(x);
            if let Some(a) = open.take() {
                intervals.push((a, b));
            }
        }
        prev = x;
        prev_d = dx;
    }
    if let Some(a) = open {
        // the constraint y < s − s1 closes the interval
        intervals.push((a, width));
    }
    intervals
}

/// Discretized f_s(y) on an aligned (s, y) grid with convergence metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateTable {
    pub params: ModelParams,
    pub s_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    /// Row-major: values[si * y_grid.len() + yi] = f_{s_grid[si]}(y_grid[yi]).
    pub values: Vec<f64>,
    pub iterations: u32,
    pub sup_change_last_iter: f64,
    /// Effective grid step after snapping s_max and y_max onto the lattice.
    pub grid_step: f64,
}

impl RateTable {
    pub fn value(&self, si: usize, yi: usize) -> f64 {
        self.values[si * self.y_grid.len() + yi]
    }

    /// g evaluated at a grid node (for f-vs-g comparisons).
    pub fn g_at(&self, si: usize, yi: usize) -> f64 {
        g_value(&self.params, self.s_grid[si], self.y_grid[yi])
    }

    /// Index of the closest s-grid node.
    pub fn nearest_s(&self, s: f64) -> usize {
        let i = (s / self.grid_step).round() as i64;
        i.clamp(0, self.s_grid.len() as i64 - 1) as usize
    }

    /// f at arbitrary (s, y): piecewise linear in the s-argument between
    /// bracketing rows, piecewise linear along y inside a row.
    pub fn interp_f(&self, s: f64, y: f64) -> f64 {
        let h = self.grid_step;
        let row = |si: usize, y: f64| {
            let fj = (y / h).floor().clamp(0.0, (self.y_grid.len() - 2) as f64);
            let yi = fj as usize;
            let w = (y - self.y_grid[yi]) / h;
            self.value(si, yi) * (1.0 - w) + self.value(si, yi + 1) * w
        };
        let fi = (s / h).floor().clamp(0.0, (self.s_grid.len() - 2) as f64);
        let si = fi as usize;
        let w = (s - self.s_grid[si]) / h;
        row(si, y) * (1.0 - w) + row(si + 1, y) * w
    }

    /// CSV rows (s, y, f, g, gap_flag) for one s-grid row; gap flags come
    /// from the analytic gap set, not from the table itself.
    pub fn csv_row_block(&self, si: usize) -> String {
        let s = self.s_grid[si];
        let gaps = gap_set(&self.params, s);
        let mut out = String::new();
        for (yi, &y) in self.y_grid.iter().enumerate() {
            let in_gap = gaps.iter().any(|&(a, b)| y > a && y < b);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s,
                y,
                self.value(si, yi),
                self.g_at(si, yi),
                in_gap
            ));
        }
        out
    }
}

/// Value-iteration computation of f on [0, s_max] × [0, y_max].
///
/// The s- and y-grids share one step so s − y always lands on a grid row;
/// iterate k equals the infimum of F over sequences with ≤ k+1 nonzero
/// parts restricted to grid values, hence decreases monotonically to the
/// grid fixed point. Arguments t ≤ 0 use the closed form g_t (extra parts
/// only add cost there).
pub fn f_table(
    p: &ModelParams,
    s_max: f64,
    y_max: f64,
    grid_step: f64,
    tol: f64,
) -> Result<RateTable, RatefnError> {
    if !grid_step.is_finite() || grid_step <= 0.0 || !s_max.is_finite() || s_max <= 0.0 {
        return Err(RatefnError::GridSpec(format!(
            "need s_max > 0 and grid_step > 0, got s_max = {s_max}, step = {grid_step}"
        )));
    }
    if y_max < s_max {
        return Err(RatefnError::GridSpec(format!(
            "y_max = {y_max} must cover s_max = {s_max}"
        )));
    }
    let th = thresholds(p);
    if grid_step > 0.5 * th.y_star {
        return Err(RatefnError::GridTooCoarse {
            step: grid_step,
            y_star: th.y_star,
        });
    }
    let ns = (s_max / grid_step - 1e-9).ceil().max(1.0) as usize;
    let h = s_max / ns as f64;
    let ny = (y_max / h - 1e-9).ceil().max(1.0) as usize;
    const NODE_BUDGET: usize = 30_000_000;
    if (ns + 1).saturating_mul(ny + 1) > NODE_BUDGET {
        return Err(RatefnError::GridSpec(format!(
            "table of {}x{} nodes exceeds the budget of {NODE_BUDGET}; increase grid_step",
            ns + 1,
            ny + 1
        )));
    }
    let s_grid: Vec<f64> = (0..=ns).map(|i| i as f64 * h).collect();
    let y_grid: Vec<f64> = (0..=ny).map(|j| j as f64 * h).collect();
    let ypow: Vec<f64> = y_grid.iter().map(|y| y.powf(p.alpha)).collect();
    let cols = ny + 1;

    let mut values = vec![0.0f64; (ns + 1) * cols];
    for (si, &s) in s_grid.iter().enumerate() {
        for (yi, &y) in y_grid.iter().enumerate() {
            let r = s - y;
            values[si * cols + yi] = ypow[yi] + r * r / (2.0 * p.sigma2);
        }
    }

    let inv2s2 = 1.0 / (2.0 * p.sigma2);
    let mut prefmin = vec![0.0f64; (ns + 1) * cols];
    let mut iterations = 0u32;
    let mut sup_change = f64::INFINITY;
    while iterations < 500 {
        for si in 0..=ns {
            let row = &values[si * cols..(si + 1) * cols];
            let out = &mut prefmin[si * cols..(si + 1) * cols];
            let mut acc = row[0];
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                acc = acc.min(v);
                *o = acc;
            }
        }
        sup_change = 0.0;
        for si in 0..=ns {
            for yi in 1..=ny {
                let inner = if yi <= si {
                    prefmin[(si - yi) * cols + yi]
                } else {
                    let t = (si as f64 - yi as f64) * h;
                    t * t * inv2s2
                };
                let idx = si * cols + yi;
                let new = ypow[yi] + inner;
                let old = values[idx];
                if new < old {
                    sup_change = sup_change.max(old - new);
                    values[idx] = new;
                }
            }
        }
        iterations += 1;
        if sup_change < tol {
            break;
        }
    }

    Ok(RateTable {
        params: *p,
        s_grid,
        y_grid,
        values,
        iterations,
        sup_change_last_iter: sup_change,
        grid_step: h,
    })
}

/// Default table step: fine enough to resolve the landscape features.
pub fn default_grid_step(p: &ModelParams) -> f64 {
    thresholds(p).s1.min(1.0) / 400.0
}

/// Default value-iteration stopping tolerance.
pub const DEFAULT_F_TOL: f64 = 1e-9;
