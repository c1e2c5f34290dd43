//! The integer stretched-exponential law and its truncated exponential moments.
//!
//! The law is P(X = k) = c·exp(−k^α) on k ∈ ℕ₀ with α ∈ (0,1) and
//! c = 1/Σ_{k≥0} exp(−k^α). It is heavy-tailed: E[exp(tX)] = ∞ for every
//! t > 0, so all exponential-moment work happens under a finite cutoff m,
//!
//! ```text
//! φ(t) = log Σ_{j=0}^{m} c·exp(−j^α)·e^{tj},
//! ```
//!
//! which is finite and smooth for all real t, with φ' strictly increasing
//! (log-convexity of a finite exponential sum). The conditioned-sum analysis
//! lives on the scale n^γ with γ = 1/(2−α) ∈ (1/2, 1).
//!
//! Series for c, μ, σ² are truncated by an explicit integral/incomplete-Gamma
//! tail bound ([`tail_bound`]), never by an ad-hoc term-size cutoff.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("alpha must lie in (0,1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("series tolerance must lie in (0, 1e-6], got {0}")]
    TolOutOfRange(f64),
    #[error("cutoff must be >= 1")]
    CutoffTooSmall,
    #[error(
        "tail bound needs x^{k_power}·exp(-x^alpha) decreasing and the Gamma bound valid at ell={ell}; use ell >= {min_ell}"
    )]
    EllTooSmall {
        k_power: u32,
        ell: u64,
        min_ell: u64,
    },
    #[error("no tilt reaches mean {target}: the truncated tilted mean ranges over (0, {cutoff})")]
    TiltTargetOutOfRange { target: f64, cutoff: u64 },
    #[error(
        "kappa = {kappa} outside the admissible truncation range (0, {max:.6}) for |s| <= {b}"
    )]
    KappaOutOfRange { kappa: f64, b: f64, max: f64 },
    #[error(
        "series truncation for alpha = {alpha} needs more than {budget} terms at tol = {tol}; \
         use a larger alpha or a looser tolerance"
    )]
    SeriesBudgetExceeded { alpha: f64, tol: f64, budget: u64 },
}

/// The law's derived constants. Everything downstream takes this by reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    /// Normalizing constant 1/Σ exp(−k^α).
    pub c: f64,
    pub mu: f64,
    pub sigma2: f64,
    /// Critical scale exponent 1/(2−α).
    pub gamma: f64,
    /// Tolerance the c/μ/σ² series were truncated at.
    pub series_tol: f64,
}

/// Upper bound on Σ_{j>ell} j^k exp(−j^α), with the constant in front of the
/// leading-order term ell^{k+1−α}·exp(−ell^α) reported alongside.
#[derive(Debug, Clone, Copy)]
pub struct TailBound {
    pub bound: f64,
    /// bound = constant · ell^{k+1−α} · exp(−ell^α).
    pub constant: f64,
}

fn check_alpha(alpha: f64) -> Result<(), ModelError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ModelError::AlphaOutOfRange(alpha))
    }
}

/// Upper bound for the series tail Σ_{j>ell} j^{k_power}·exp(−j^α).
///
/// Sums are compared to ∫_ell^∞ u^k exp(−u^α) du (valid once the integrand is
/// decreasing on [ell, ∞), i.e. α·ell^α ≥ k), and the substitution t = u^α
/// turns the integral into an upper incomplete Gamma function,
///
/// ```text
/// (1/α) ∫_{ell^α}^∞ t^{(k+1)/α − 1} e^{−t} dt.
/// ```
///
/// With s = (k+1)/α and x = ell^α, integration by parts gives
/// Γ(s, x) ≤ x^{s−1}e^{−x} / (1 − (s−1)/x) for x > s−1 (and plainly
/// Γ(s, x) ≤ x^{s−1}e^{−x} for s ≤ 1), which is the closed form used here.
pub fn tail_bound(alpha: f64, k_power: u32, ell: u64) -> Result<TailBound, ModelError> {
    check_alpha(alpha)?;
    let k = f64::from(k_power);
    let s = (k + 1.0) / alpha;
    // monotonicity of the integrand needs alpha·ell^alpha > k; the Gamma bound
    // needs ell^alpha > s−1. Report the smallest admissible ell for both.
    let min_x = (k / alpha).max(s - 1.0);
    let min_ell = (min_x.powf(1.0 / alpha) + 1.0).min(9.0e18).ceil() as u64;
    let x = (ell as f64).powf(alpha);
    if ell == 0 || alpha * x <= k || (s > 1.0 && x <= s - 1.0) {
        return Err(ModelError::EllTooSmall {
            k_power,
            ell,
            min_ell,
        });
    }
    let factor = if s > 1.0 {
        1.0 / (1.0 - (s - 1.0) / x)
    } else {
        1.0
    };
    let constant = factor / alpha;
    let bound = constant * (ell as f64).powf(k + 1.0 - alpha) * (-x).exp();
    Ok(TailBound { bound, constant })
}

/// Derive (c, μ, σ², γ) for the law with the given α.
///
/// Each power series Σ k^p exp(−k^α), p = 0, 1, 2, is truncated at the
/// smallest K whose [`tail_bound`] falls below `tol` times the partial sum.
pub fn derive_params(alpha: f64, tol: f64) -> Result<ModelParams, ModelError> {
    check_alpha(alpha)?;
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(ModelError::TolOutOfRange(tol));
    }
    let mut sums = [0.0f64; 3];
    let mut k: u64 = 0;
    loop {
        let kf = k as f64;
        let w = (-kf.powf(alpha)).exp();
        sums[0] += w;
        sums[1] += kf * w;
        sums[2] += kf * kf * w;
        let converged = (0u32..3).all(|p| match tail_bound(alpha, p, k) {
            Ok(tb) => tb.bound < tol * sums[p as usize],
            Err(_) => false,
        });
        if converged {
            break;
        }
        k += 1;
        // small alpha pushes the stopping point past any desk-scale budget
        // (the law's mean itself grows like exp(Θ(alpha^{-1} log alpha^{-1})))
        const BUDGET: u64 = 20_000_000;
        if k > BUDGET {
            return Err(ModelError::SeriesBudgetExceeded {
                alpha,
                tol,
                budget: BUDGET,
            });
        }
    }
    let c = 1.0 / sums[0];
    let mu = sums[1] / sums[0];
    let sigma2 = sums[2] / sums[0] - mu * mu;
    Ok(ModelParams {
        alpha,
        c,
        mu,
        sigma2,
        gamma: 1.0 / (2.0 - alpha),
        series_tol: tol,
    })
}

impl ModelParams {
    /// P(X = k) = c·exp(−k^α).
    pub fn pmf(&self, k: u64) -> f64 {
        self.c * (-(k as f64).powf(self.alpha)).exp()
    }

    /// log P(X = k) = log c − k^α.
    pub fn log_pmf(&self, k: u64) -> f64 {
        self.c.ln() - (k as f64).powf(self.alpha)
    }

    /// The leading Gaussian cost s²/(2σ²)·n^{2γ−1} of the moderate deviation
    /// {S_n = μn + s·n^γ} with all summands small.
    pub fn gaussian_exponent(&self, s: f64, n: u64) -> f64 {
        s * s / (2.0 * self.sigma2) * (n as f64).powf(2.0 * self.gamma - 1.0)
    }
}

/// Admissibility of a truncation level κ (cutoff m = ⌊κ·n^γ⌋) for tilted
/// analysis of sums conditioned at μn + s·n^γ.
///
/// The tilt needed is t ≈ (b/σ²)·n^{γ−1} with b a bound on |s|, and the sum
/// Σ j^k exp(t·j − j^α) over j ≤ c₂·n^γ stays bounded uniformly in n exactly
/// when c₂ < c₁^{−1/(1−α)} with c₁ = b/σ². Hence the admissible range is
///
/// ```text
/// 0 < κ < (σ²/b)^{+1/(1−α)}.
/// ```
///
/// Note the exponent sign: with the opposite sign, (σ²/b)^{−1/(1−α)}, the
/// admissible set would shrink as σ² grows, while the series bound above
/// plainly holds for larger κ then. This function implements the `+` reading;
/// the other form is rejected as inconsistent with the bound it derives from.
pub fn validate_kappa(params: &ModelParams, s: f64, kappa: f64) -> Result<(), ModelError> {
    let b = s.abs();
    if kappa <= 0.0 {
        return Err(ModelError::KappaOutOfRange {
            kappa,
            b,
            max: f64::INFINITY,
        });
    }
    if b == 0.0 {
        return Ok(());
    }
    let max = (params.sigma2 / b).powf(1.0 / (1.0 - params.alpha));
    if kappa < max {
        Ok(())
    } else {
        Err(ModelError::KappaOutOfRange { kappa, b, max })
    }
}

/// Cumulant generating function of the law truncated to [0, cutoff].
///
/// Finite for every real t; φ' sweeps (0, cutoff) strictly monotonically.
#[derive(Debug, Clone)]
pub struct TruncatedCgf {
    params: ModelParams,
    cutoff: u64,
}

impl TruncatedCgf {
    pub fn new(params: ModelParams, cutoff: u64) -> Result<Self, ModelError> {
        if cutoff < 1 {
            return Err(ModelError::CutoffTooSmall);
        }
        Ok(Self { params, cutoff })
    }

    pub fn cutoff(&self) -> u64 {
        self.cutoff
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn max_exponent(&self, t: f64) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for j in 0..=self.cutoff {
            let jf = j as f64;
            m = m.max(t * jf - jf.powf(self.params.alpha));
        }
        m
    }

    /// φ(t) = log Σ_{j≤cutoff} c·exp(−j^α + t·j).
    pub fn value(&self, t: f64) -> f64 {
        let m = self.max_exponent(t);
        let mut z = 0.0;
        for j in 0..=self.cutoff {
            let jf = j as f64;
            z += (t * jf - jf.powf(self.params.alpha) - m).exp();
        }
        self.params.c.ln() + m + z.ln()
    }

    /// (φ', φ'', φ''') at t: the mean, variance and third central moment of
    /// the tilted truncated law, accumulated in central form.
    pub fn derivs(&self, t: f64) -> (f64, f64, f64) {
        let alpha = self.params.alpha;
        let m = self.max_exponent(t);
        let (mut z, mut zj) = (0.0, 0.0);
        for j in 0..=self.cutoff {
            let jf = j as f64;
            let w = (t * jf - jf.powf(alpha) - m).exp();
            z += w;
            zj += jf * w;
        }
        let mean = zj / z;
        let (mut m2, mut m3) = (0.0, 0.0);
        for j in 0..=self.cutoff {
            let jf = j as f64;
            let w = (t * jf - jf.powf(alpha) - m).exp();
            let d = jf - mean;
            m2 += d * d * w;
            m3 += d * d * d * w;
        }
        (mean, m2 / z, m3 / z)
    }
}

/// Solve φ'(t) = target_mean.
///
/// φ' is strictly increasing with range (0, cutoff), so the solution is
/// unique. Bracketing by doubling, then Newton with bisection fallback;
/// stops at |φ'(t) − target| ≤ 1e−10·max(1, target).
pub fn solve_tilt(tcgf: &TruncatedCgf, target_mean: f64) -> Result<f64, ModelError> {
    let cutoff = tcgf.cutoff() as f64;
    if !(target_mean > 0.0 && target_mean < cutoff) {
        return Err(ModelError::TiltTargetOutOfRange {
            target: target_mean,
            cutoff: tcgf.cutoff(),
        });
    }
    let tol = 1e-10 * target_mean.max(1.0);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while tcgf.derivs(lo).0 >= target_mean {
        lo *= 2.0;
    }
    while tcgf.derivs(hi).0 <= target_mean {
        hi *= 2.0;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (mean, var, _) = tcgf.derivs(t);
        let resid = mean - target_mean;
        if resid.abs() <= tol {
            return Ok(t);
        }
        if resid > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let newton = t - resid / var;
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(t)
}
