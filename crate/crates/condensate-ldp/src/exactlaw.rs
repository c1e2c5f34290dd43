//! Exact finite-n laws by log-domain convolution.
//!
//! The conditioned probabilities this crate verifies live on the scale
//! exp(−Θ(n^{γα})): around exp(−60) at desk sizes. All mass functions are
//! therefore held in natural-log form ([`LogPmf`]) and convolved entry by
//! entry with the maximum exponent factored out. Convolution is the plain
//! O(N²) sum — transform methods would destroy the relative accuracy of the
//! far tails — and n-fold laws are assembled by binary doubling, so the total
//! cost stays O(N² log n).
//!
//! Truncating every intermediate law to [0, N_max] is exact for the entries
//! that survive: supports are nonnegative, so entry N of a convolution only
//! ever reads entries ≤ N of its factors.
//!
//! The brute-force enumeration oracle used by the tests and by the CLI's
//! `--oracle` flag lives in [`enumeration`]; it never touches the convolution
//! path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ModelError, ModelParams};
use crate::ratefn;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("single_law needs K >= 1, got {0}")]
    SupportTooSmall(u64),
    #[error("sum_law needs n >= 1")]
    ZeroVariables,
    #[error(
        "top_two_joint needs 0 <= b < a <= N and n >= 2 (got n={n}, N={n_target}, a={a}, b={b})"
    )]
    BadTopTwo {
        n: u64,
        n_target: u64,
        a: u64,
        b: u64,
    },
    #[error(
        "support of {needed} entries exceeds the memory budget of {budget} (lower N_max or n)"
    )]
    ResourceLimit { needed: u64, budget: u64 },
    #[error("n_values must be strictly increasing powers of two, got {0:?}")]
    BadNList(Vec<u64>),
    #[error("window must have positive length and lie in y >= 0, got [{lo}, {hi}]")]
    BadWindow { lo: f64, hi: f64 },
    #[error("m_grid must be nondecreasing")]
    BadMGrid,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Entry budget for any single law. 8e6 f64 entries is 64 MB; sums of a few
/// thousand variables stay far below this.
pub const SUPPORT_BUDGET: u64 = 8_000_000;

/// A (sub-)probability mass function on a contiguous integer range, stored in
/// log domain. Entries may be −∞; `log_mass` caches log of the total mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogPmf {
    offset: u64,
    logp: Vec<f64>,
    log_mass: f64,
}

impl LogPmf {
    pub fn new(offset: u64, logp: Vec<f64>) -> Self {
        let log_mass = crate::numeric::log_sum_exp(&logp);
        Self {
            offset,
            logp,
            log_mass,
        }
    }

    /// Point mass at k.
    pub fn delta(k: u64) -> Self {
        Self::new(k, vec![0.0])
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp.is_empty()
    }

    /// Largest support point, or None for an empty pmf.
    pub fn last(&self) -> Option<u64> {
        (!self.logp.is_empty()).then(|| self.offset + self.logp.len() as u64 - 1)
    }

    /// log P(X = k); −∞ outside the stored support.
    pub fn log_at(&self, k: u64) -> f64 {
        if k < self.offset {
            return f64::NEG_INFINITY;
        }
        self.logp
            .get((k - self.offset) as usize)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// log of the total stored mass.
    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    pub fn log_entries(&self) -> &[f64] {
        &self.logp
    }

    fn bit_key(&self) -> (usize, u64, Vec<u64>) {
        (
            self.logp.len(),
            self.offset,
            self.logp.iter().map(|x| x.to_bits()).collect(),
        )
    }
}

/// The law of one variable restricted to [0, min(K, cap)].
///
/// With `cap` present this is the sub-normalized law of {X = k, X ≤ cap};
/// the missing upper mass is at most c·tail_bound(α, 0, K).
pub fn single_law(
    params: &ModelParams,
    k_max: u64,
    cap: Option<u64>,
) -> Result<LogPmf, ExactError> {
    if k_max < 1 {
        return Err(ExactError::SupportTooSmall(k_max));
    }
    let top = cap.map_or(k_max, |c| c.min(k_max));
    check_budget(top + 1)?;
    let logc = params.c.ln();
    let logp = (0..=top)
        .map(|k| logc - (k as f64).powf(params.alpha))
        .collect();
    Ok(LogPmf::new(0, logp))
}

fn check_budget(entries: u64) -> Result<(), ExactError> {
    if entries > SUPPORT_BUDGET {
        Err(ExactError::ResourceLimit {
            needed: entries,
            budget: SUPPORT_BUDGET,
        })
    } else {
        Ok(())
    }
}

/// Exact log-domain convolution truncated to support [0, n_max].
///
/// Each output entry is a log-sum-exp with the running maximum factored out.
/// Arguments are put in a canonical order first, so `convolve(p, q)` and
/// `convolve(q, p)` produce bit-identical results.
pub fn convolve(p: &LogPmf, q: &LogPmf, n_max: u64) -> Result<LogPmf, ExactError> {
    let (p, q) = if q.bit_key() < p.bit_key() {
        (q, p)
    } else {
        (p, q)
    };
    if p.is_empty() || q.is_empty() {
        return Ok(LogPmf::new(0, Vec::new()));
    }
    let offset = p.offset + q.offset;
    if offset > n_max {
        return Ok(LogPmf::new(offset, Vec::new()));
    }
    let p_last = p.last().unwrap();
    let q_last = q.last().unwrap();
    let top = n_max.min(p_last + q_last);
    check_budget(top - offset + 1)?;
    let mut out = Vec::with_capacity((top - offset + 1) as usize);
    for r in offset..=top {
        let i_lo = p.offset.max(r.saturating_sub(q_last));
        let i_hi = p_last.min(r - q.offset);
        let mut m = f64::NEG_INFINITY;
        for i in i_lo..=i_hi {
            let v = p.log_at(i) + q.log_at(r - i);
            if v > m {
                m = v;
            }
        }
        if m == f64::NEG_INFINITY {
            out.push(f64::NEG_INFINITY);
            continue;
        }
        let mut sum = 0.0;
        for i in i_lo..=i_hi {
            sum += (p.log_at(i) + q.log_at(r - i) - m).exp();
        }
        out.push(m + sum.ln());
    }
    Ok(LogPmf::new(offset, out))
}

/// The law of (S_n, all X_i ≤ cap) on [0, n_max], by binary doubling:
/// ⌈log₂ n⌉ squarings plus one multiply per set bit.
pub fn sum_law(
    params: &ModelParams,
    n: u64,
    n_max: u64,
    cap: Option<u64>,
) -> Result<LogPmf, ExactError> {
    if n == 0 {
        return Err(ExactError::ZeroVariables);
    }
    let base = single_law(params, n_max.max(1), cap)?;
    let mut acc: Option<LogPmf> = None;
    let mut sq = base;
    let mut m = n;
    loop {
        if m & 1 == 1 {
            acc = Some(match acc {
                None => sq.clone(),
                Some(a) => convolve(&a, &sq, n_max)?,
            });
        }
        m >>= 1;
        if m == 0 {
            break;
        }
        sq = convolve(&sq, &sq, n_max)?;
    }
    Ok(acc.expect("n >= 1"))
}

/// Default support ceiling for sums targeted at μn + s·n^γ: the mean plus a
/// wide Gaussian margin plus three times the conditioned excess.
pub fn default_n_max(params: &ModelParams, s: f64, n: u64) -> u64 {
    let nf = n as f64;
    (params.mu * nf
        + 6.0 * params.sigma2.sqrt() * nf.sqrt()
        + 3.0 * s.abs() * nf.powf(params.gamma))
    .ceil() as u64
}

/// Lattice point N = ⌊μn + s·n^γ⌋ and the recomputed s_n = (N − μn)/n^γ, so
/// downstream comparisons use the exact integer target.
pub fn lattice_target(params: &ModelParams, s: f64, n: u64) -> (u64, f64) {
    let nf = n as f64;
    let ng = nf.powf(params.gamma);
    let target = params.mu * nf + s * ng;
    let n_int = target.floor().max(0.0) as u64;
    (n_int, (n_int as f64 - params.mu * nf) / ng)
}

/// P(M_n ≤ m | S_n = N) for each m in `m_grid` (nondecreasing).
pub fn conditioned_max_cdf(
    params: &ModelParams,
    n: u64,
    n_target: u64,
    m_grid: &[u64],
) -> Result<Vec<f64>, ExactError> {
    if m_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(ExactError::BadMGrid);
    }
    let base = sum_law(params, n, n_target, None)?.log_at(n_target);
    let mut out = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let capped = sum_law(params, n, n_target, Some(m))?.log_at(n_target);
        out.push((capped - base).exp());
    }
    Ok(out)
}

/// log P(X_{[1:n]} = a, X_{[2:n]} ≤ b, S_n = N) = log n + log pmf(a)
/// + log P(S_{n−1} = N − a, M_{n−1} ≤ b).
///
/// Valid because b < a forces exactly one coordinate to equal a. Ties need
/// CDF differences instead, which is why b ≥ a is rejected.
pub fn top_two_joint(
    params: &ModelParams,
    n: u64,
    n_target: u64,
    a: u64,
    b: u64,
) -> Result<f64, ExactError> {
    if n < 2 || b >= a || a > n_target {
        return Err(ExactError::BadTopTwo { n, n_target, a, b });
    }
    let rest = sum_law(params, n - 1, n_target - a, Some(b))?.log_at(n_target - a);
    Ok((n as f64).ln() + params.log_pmf(a) + rest)
}

/// Empirical LDP slopes −(1/n^{γα}) log P against a predicted limit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeReport {
    pub alpha: f64,
    pub s: f64,
    pub n_values: Vec<u64>,
    pub slopes: Vec<f64>,
    pub limit_prediction: f64,
    /// |slope − limit| / n^{γ−1}: the dominant finite-n correction scale.
    pub residual_ratios: Vec<f64>,
}

impl SlopeReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("n,slope,prediction,residual_ratio\n");
        for (i, &n) in self.n_values.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                n, self.slopes[i], self.limit_prediction, self.residual_ratios[i]
            ));
        }
        out
    }
}

fn check_n_list(n_list: &[u64]) -> Result<(), ExactError> {
    let ok = !n_list.is_empty()
        && n_list.iter().all(|&n| n.is_power_of_two())
        && n_list.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(ExactError::BadNList(n_list.to_vec()))
    }
}

/// Slopes of log P(S_n = ⌊μn + s·n^γ⌋) at speed n^{γα}, with the variational
/// minimum as the predicted limit.
pub fn ldp_slope_sum(
    params: &ModelParams,
    s: f64,
    n_list: &[u64],
) -> Result<SlopeReport, ExactError> {
    check_n_list(n_list)?;
    let prediction = ratefn::inf_f(params, s).value;
    let mut slopes = Vec::new();
    let mut ratios = Vec::new();
    for &n in n_list {
        let nf = n as f64;
        let (n_int, _sn) = lattice_target(params, s, n);
        let log_p = sum_law(params, n, n_int, None)?.log_at(n_int);
        let slope = -log_p / nf.powf(params.gamma * params.alpha);
        slopes.push(slope);
        ratios.push((slope - prediction).abs() / nf.powf(params.gamma - 1.0));
    }
    Ok(SlopeReport {
        alpha: params.alpha,
        s,
        n_values: n_list.to_vec(),
        slopes,
        limit_prediction: prediction,
        residual_ratios: ratios,
    })
}

/// Slopes of log P(M_n/n^γ ∈ [lo, hi] | S_n = ⌊μn + s·n^γ⌋), with the window
/// infimum of the maximum's rate function as the predicted limit.
pub fn ldp_slope_max(
    params: &ModelParams,
    s: f64,
    window: (f64, f64),
    n_list: &[u64],
) -> Result<SlopeReport, ExactError> {
    check_n_list(n_list)?;
    let (lo, hi) = window;
    if !(lo >= 0.0 && hi > lo) {
        return Err(ExactError::BadWindow { lo, hi });
    }
    // predicted limit: inf over the window of the rate of the maximum
    let scan = |y: f64| ratefn::rate_max(params, s, y).unwrap_or(f64::INFINITY);
    let (ymin, vmin) = crate::numeric::grid_min(scan, lo, hi, 1001);
    let step = (hi - lo) / 1000.0;
    let refined =
        crate::numeric::golden_min(scan, (ymin - step).max(lo), (ymin + step).min(hi), 80);
    let prediction = vmin.min(scan(refined));

    let mut slopes = Vec::new();
    let mut ratios = Vec::new();
    for &n in n_list {
        let nf = n as f64;
        let ng = nf.powf(params.gamma);
        let (n_int, _) = lattice_target(params, s, n);
        let base = sum_law(params, n, n_int, None)?.log_at(n_int);
        let m_hi = (hi * ng).floor() as u64;
        let log_hi = sum_law(params, n, n_int, Some(m_hi))?.log_at(n_int);
        let m_lo = (lo * ng).ceil() as i64 - 1;
        let log_lo = if m_lo < 0 {
            f64::NEG_INFINITY
        } else {
            sum_law(params, n, n_int, Some(m_lo as u64))?.log_at(n_int)
        };
        // log(e^hi − e^lo), guarded against cancellation when the window
        // carries almost no conditional mass
        let log_window = if log_lo == f64::NEG_INFINITY {
            log_hi
        } else {
            log_hi + (-(log_lo - log_hi).exp()).ln_1p()
        };
        let slope = -(log_window - base) / nf.powf(params.gamma * params.alpha);
        slopes.push(slope);
        ratios.push((slope - prediction).abs() / nf.powf(params.gamma - 1.0));
    }
    Ok(SlopeReport {
        alpha: params.alpha,
        s,
        n_values: n_list.to_vec(),
        slopes,
        limit_prediction: prediction,
        residual_ratios: ratios,
    })
}

/// One n-entry of the normal-approximation residual check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub n: u64,
    pub cap: u64,
    pub s_n: f64,
    pub log_p: f64,
    pub gaussian_exponent: f64,
    /// |log P + s_n²/(2σ²)·n^{2γ−1}| / n^{3γ−2}.
    pub residual_ratio: f64,
    /// False when the event {M_n ≤ cap, S_n = N} is empty at this n (the
    /// truncation premises are asymptotic; small n can starve the cap).
    pub feasible: bool,
}

/// Residuals |log P(M_n ≤ κn^γ, S_n = μn + s_n·n^γ) + gaussian| / n^{3γ−2}.
///
/// κ is validated against the admissible-truncation condition first.
pub fn normal_residual(
    params: &ModelParams,
    s: f64,
    kappa: f64,
    n_list: &[u64],
) -> Result<Vec<ResidualPoint>, ExactError> {
    check_n_list(n_list)?;
    model::validate_kappa(params, s, kappa)?;
    let mut out = Vec::new();
    for &n in n_list {
        let nf = n as f64;
        let (n_int, s_n) = lattice_target(params, s, n);
        let cap = (kappa * nf.powf(params.gamma)).floor() as u64;
        let log_p = sum_law(params, n, n_int, Some(cap))?.log_at(n_int);
        let gaussian = params.gaussian_exponent(s_n, n);
        let scale = nf.powf(3.0 * params.gamma - 2.0);
        out.push(ResidualPoint {
            n,
            cap,
            s_n,
            log_p,
            gaussian_exponent: gaussian,
            residual_ratio: (log_p + gaussian).abs() / scale,
            feasible: log_p > f64::NEG_INFINITY,
        });
    }
    Ok(out)
}

/// Brute-force enumeration over all n-tuples: the independent oracle for the
/// convolution machinery. Exposed for the CLI's `--oracle` flag and the test
/// suite; complexity (N+1)^n, so only desk sizes are allowed.
pub mod enumeration {
    use super::*;

    const TUPLE_BUDGET: f64 = 2.0e8;

    fn check(params: &ModelParams, n: u64, n_max: u64) -> Result<(), ExactError> {
        let count = ((n_max + 1) as f64).powi(n as i32);
        if count > TUPLE_BUDGET {
            return Err(ExactError::ResourceLimit {
                needed: count as u64,
                budget: TUPLE_BUDGET as u64,
            });
        }
        let _ = params;
        Ok(())
    }

    fn for_each_tuple(n: usize, top: u64, mut f: impl FnMut(&[u64])) {
        let mut tuple = vec![0u64; n];
        loop {
            f(&tuple);
            let mut i = 0;
            loop {
                if i == n {
                    return;
                }
                if tuple[i] < top {
                    tuple[i] += 1;
                    break;
                }
                tuple[i] = 0;
                i += 1;
            }
        }
    }

    /// P(S_n = N) for every N ≤ n_max, with an optional per-variable cap.
    pub fn sum_pmf(
        params: &ModelParams,
        n: u64,
        n_max: u64,
        cap: Option<u64>,
    ) -> Result<Vec<f64>, ExactError> {
        check(params, n, n_max)?;
        let top = cap.map_or(n_max, |c| c.min(n_max));
        let weights: Vec<f64> = (0..=top).map(|k| params.pmf(k)).collect();
        let mut out = vec![0.0f64; (n_max + 1) as usize];
        for_each_tuple(n as usize, top, |tuple| {
            let s: u64 = tuple.iter().sum();
            if s <= n_max {
                let p: f64 = tuple.iter().map(|&k| weights[k as usize]).product();
                out[s as usize] += p;
            }
        });
        Ok(out)
    }

    /// P(X_{[1:n]} = a, X_{[2:n]} ≤ b, S_n = N) by enumeration.
    pub fn top_two(
        params: &ModelParams,
        n: u64,
        n_target: u64,
        a: u64,
        b: u64,
    ) -> Result<f64, ExactError> {
        check(params, n, n_target)?;
        let weights: Vec<f64> = (0..=n_target).map(|k| params.pmf(k)).collect();
        let mut total = 0.0;
        for_each_tuple(n as usize, n_target, |tuple| {
            let s: u64 = tuple.iter().sum();
            if s != n_target {
                return;
            }
            let mut sorted = tuple.to_vec();
            sorted.sort_unstable_by(|x, y| y.cmp(x));
            if sorted[0] == a && (n == 1 || sorted[1] <= b) {
                total += tuple.iter().map(|&k| weights[k as usize]).product::<f64>();
            }
        });
        Ok(total)
    }

    /// P(M_n = m | S_n = N) for every m ≤ N, by enumeration.
    pub fn conditioned_max_pmf(
        params: &ModelParams,
        n: u64,
        n_target: u64,
    ) -> Result<Vec<f64>, ExactError> {
        check(params, n, n_target)?;
        let weights: Vec<f64> = (0..=n_target).map(|k| params.pmf(k)).collect();
        let mut joint = vec![0.0f64; (n_target + 1) as usize];
        let mut norm = 0.0;
        for_each_tuple(n as usize, n_target, |tuple| {
            let s: u64 = tuple.iter().sum();
            if s != n_target {
                return;
            }
            let p: f64 = tuple.iter().map(|&k| weights[k as usize]).product();
            let m = *tuple.iter().max().unwrap();
            joint[m as usize] += p;
            norm += p;
        });
        for v in &mut joint {
            *v /= norm;
        }
        Ok(joint)
    }
}
