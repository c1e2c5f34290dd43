//! Shared numerical kernels: log-sum-exp accumulation and bracketed
//! one-dimensional root finding / minimization.
//!
//! Everything here works on plain `f64`. Probabilities in this crate routinely
//! reach `exp(-60)` and below, so sums of exponentials are always formed with
//! the maximum exponent factored out.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("no sign change on [{a}, {b}]: f(a) = {fa:.3e}, f(b) = {fb:.3e}")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },
}

/// log(Σ exp(x_i)) with the maximum exponent factored out.
///
/// Empty input and all-(-∞) input both give -∞.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Streaming two-pass-free variant for pairs: log(e^a + e^b).
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Root of a continuous function on a sign-changing bracket.
///
/// Bisection interleaved with secant steps: a secant proposal is accepted only
/// if it stays inside the bracket, and a plain bisection is forced whenever the
/// bracket fails to halve, so convergence is never worse than twice bisection.
/// Stops when the bracket width is below `rel_tol * max(1, |x|)`.
pub fn bracketed_root<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64, NumericError> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericError::NoSignChange { a, b, fa, fb });
    }
    let mut force_bisect = false;
    for _ in 0..300 {
        let width = b - a;
        let scale = a.abs().max(b.abs()).max(1.0);
        if width.abs() <= rel_tol * scale {
            break;
        }
        let mid = a + 0.5 * width;
        let mut x = if force_bisect {
            mid
        } else {
            b - fb * width / (fb - fa)
        };
        if !x.is_finite() || x <= a || x >= b {
            x = mid;
        }
        if x == a || x == b {
            // bracket is at f64 resolution
            break;
        }
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        let old_width = width;
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        force_bisect = (b - a) > 0.5 * old_width;
    }
    Ok(a + 0.5 * (b - a))
}

/// Golden-section minimum of a unimodal function on [a, b].
pub fn golden_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Coarse scan of `f` on `points` equally spaced nodes over [a, b];
/// returns (argmin, min).
pub fn grid_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, points: usize) -> (f64, f64) {
    debug_assert!(points >= 2);
    let h = (b - a) / (points - 1) as f64;
    let mut best = (a, f(a));
    for i in 1..points {
        let x = a + h * i as f64;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}
