//! Importance sampling for conditioned probabilities beyond the exact
//! oracle's reach.
//!
//! The change of measure is the tilted-and-truncated law
//!
//! ```text
//! P̂(X = k) = 1{k ≤ m} · exp(t·k − k^α) / Σ_{j≤m} exp(t·j − j^α),
//! ```
//!
//! with the tilt t solving φ'(t) = N/n so the conditioning event becomes
//! typical. On {all X_i ≤ m} the density ratio against the original law is
//! exp(n·φ(t) − t·S_n), so
//!
//! ```text
//! P(S_n = N, M_n ≤ m) = exp(n·φ(t) − t·N) · P̂(Ŝ_n = N),
//! ```
//!
//! and P̂(Ŝ_n = N) is estimated by the exact-hit fraction — the lattice event
//! itself, no smoothing — at a Θ(1/√n) hit rate.
//!
//! The tilted-truncated measure cannot produce a maximum above the cutoff.
//! Histogram bins beyond it are estimated by planting the largest value:
//! P(M_n = a, rest ≤ m', S_n = N) = n·pmf(a)·P(S_{n−1} = N−a, M_{n−1} ≤ m'),
//! with the remainder probability estimated by its own tilted run under a
//! remainder cap m' = min(a−1, tail-negligible level). The cap must not stay
//! at the histogram cutoff: the remainder's own maximum is typically far
//! above κ·n^γ, and capping there would suppress every stratum by the cost
//! of an extra big-jump event. Configurations with two values above m'
//! remain uncounted; m' is chosen so their total weight is below 1e−4.
//! One run per bin serves every planted a in the bin, since a single sample
//! of Ŝ_{n−1} values prices all nearby targets at once.
//!
//! Batches own independent RNG streams derived from (seed, stream index) and
//! merge in index order, so estimates are byte-identical for a fixed
//! (seed, batches, batch_size) regardless of thread count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactlaw::lattice_target;
use crate::model::{self, ModelError, ModelParams, TruncatedCgf};
use crate::par::run_indexed as run_batches;
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum McError {
    #[error("need at least 2 batches for a batch-means error bar, got {0}")]
    TooFewBatches(usize),
    #[error("batch_size must be >= 1")]
    EmptyBatch,
    #[error("histogram needs at least two increasing nonnegative y-edges")]
    BadBins,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Inverse-CDF sampler for the tilted law truncated to [0, cutoff].
#[derive(Debug, Clone)]
pub struct TiltedSampler {
    params: ModelParams,
    cutoff: u64,
    /// Tilt parameter; φ'(t) equals the target mean.
    t: f64,
    /// Cumulative probabilities over [0, cutoff]; last entry pinned to 1.
    table: Vec<f64>,
    /// φ(t) of the truncated law.
    log_norm: f64,
    seed: u64,
}

fn tilted_cumulative(params: &ModelParams, cutoff: u64, t: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity((cutoff + 1) as usize);
    let mut m = f64::NEG_INFINITY;
    for j in 0..=cutoff {
        let jf = j as f64;
        let e = t * jf - jf.powf(params.alpha);
        m = m.max(e);
        w.push(e);
    }
    let mut acc = 0.0;
    for e in &mut w {
        acc += (*e - m).exp();
        *e = acc;
    }
    let total = acc;
    for e in &mut w {
        *e /= total;
    }
    if let Some(last) = w.last_mut() {
        *last = 1.0;
    }
    w
}

impl TiltedSampler {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cutoff(&self) -> u64 {
        self.cutoff
    }

    pub fn tilt(&self) -> f64 {
        self.t
    }

    /// φ(t) of the truncated law.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.table
    }

    /// One draw by binary search in the cumulative table.
    pub fn draw(&self, rng: &mut SplitMix64) -> u64 {
        let u = rng.next_f64();
        self.table.partition_point(|&c| c <= u) as u64
    }

    /// Mean of the sampling law (= φ'(t) for a nondegenerate cutoff).
    pub fn mean(&self) -> f64 {
        let mut prev = 0.0;
        let mut m = 0.0;
        for (j, &c) in self.table.iter().enumerate() {
            m += j as f64 * (c - prev);
            prev = c;
        }
        m
    }
}

/// Build the sampler for the event {S_n = ⌊μn + s·n^γ⌋, M_n ≤ ⌊κ·n^γ⌋}.
///
/// κ is validated against the admissible-truncation condition, and the tilt
/// target N/n must be reachable, i.e. lie in (0, cutoff). A zero cutoff is
/// the degenerate point mass at 0 and is accepted only when N = 0.
pub fn build_sampler(
    params: &ModelParams,
    n: u64,
    s: f64,
    kappa: f64,
    seed: u64,
) -> Result<TiltedSampler, McError> {
    model::validate_kappa(params, s, kappa)?;
    let (n_target, _) = lattice_target(params, s, n);
    let cutoff = (kappa * (n as f64).powf(params.gamma)).floor() as u64;
    let target = n_target as f64 / n as f64;
    if cutoff == 0 {
        if n_target != 0 {
            return Err(McError::Model(ModelError::TiltTargetOutOfRange {
                target,
                cutoff,
            }));
        }
        return Ok(TiltedSampler {
            params: *params,
            cutoff,
            t: 0.0,
            table: vec![1.0],
            log_norm: params.c.ln(),
            seed,
        });
    }
    let cgf = TruncatedCgf::new(*params, cutoff)?;
    let t = model::solve_tilt(&cgf, target)?;
    Ok(TiltedSampler {
        params: *params,
        cutoff,
        t,
        table: tilted_cumulative(params, cutoff, t),
        log_norm: cgf.value(t),
        seed,
    })
}

/// Importance-sampling estimate with a batch-means error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub log_probability: f64,
    /// Standard error of the log estimate (delta method over batch means);
    /// infinite until at least two batches score hits.
    pub standard_error_log: f64,
    pub n_samples: u64,
    pub hit_count: u64,
}

fn batch_means_log(weights: &[f64], hit_count: u64, n_samples: u64) -> McEstimate {
    let b = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / b;
    if hit_count == 0 || mean <= 0.0 {
        return McEstimate {
            log_probability: f64::NEG_INFINITY,
            standard_error_log: f64::INFINITY,
            n_samples,
            hit_count,
        };
    }
    let var = weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (b - 1.0);
    let se_mean = (var / b).sqrt();
    McEstimate {
        log_probability: mean.ln(),
        standard_error_log: se_mean / mean,
        n_samples,
        hit_count,
    }
}

/// Estimate P(S_n = N, M_n ≤ cutoff) from exact hits of the tilted sum.
///
/// Zero hits across all batches is not an error: the estimate comes back
/// with `hit_count = 0`, −∞ log-probability and an infinite error bar, and
/// the caller must enlarge the sampling effort or adjust the tilt.
pub fn estimate_conditioned(
    sampler: &TiltedSampler,
    n: u64,
    n_target: u64,
    batches: usize,
    batch_size: usize,
    threads: usize,
) -> Result<McEstimate, McError> {
    if batches < 2 {
        return Err(McError::TooFewBatches(batches));
    }
    if batch_size == 0 {
        return Err(McError::EmptyBatch);
    }
    let log_weight = n as f64 * sampler.log_norm() - sampler.tilt() * n_target as f64;
    let weight = log_weight.exp();
    let per_batch: Vec<(f64, u64)> = run_batches(batches, threads, |b| {
        let mut rng = SplitMix64::stream(sampler.seed(), b as u64);
        let mut hits = 0u64;
        for _ in 0..batch_size {
            let mut sum = 0u64;
            for _ in 0..n {
                sum += sampler.draw(&mut rng);
            }
            if sum == n_target {
                hits += 1;
            }
        }
        (hits as f64 / batch_size as f64 * weight, hits)
    });
    let weights: Vec<f64> = per_batch.iter().map(|p| p.0).collect();
    let hit_count: u64 = per_batch.iter().map(|p| p.1).sum();
    Ok(batch_means_log(
        &weights,
        hit_count,
        (batches * batch_size) as u64,
    ))
}

/// Histogram request for the rescaled conditioned maximum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub n: u64,
    pub s: f64,
    pub kappa: f64,
    /// Increasing bin edges in units of n^γ; bin j covers [e_j, e_{j+1}).
    pub y_edges: Vec<f64>,
    pub batches: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub threads: usize,
}

/// One bin of the conditioned-maximum histogram.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BinEstimate {
    pub y_lo: f64,
    pub y_hi: f64,
    /// Estimate of P(M_n/n^γ ∈ bin | S_n = N).
    pub conditional: f64,
    pub standard_error: f64,
    pub hits: u64,
    /// True when no sample or stratum contributed; the value is then not an
    /// estimate of a small probability but simply missing.
    pub flagged_empty: bool,
}

/// Stratified histogram of M_n/n^γ under the conditioned law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxHistogram {
    pub n: u64,
    pub n_target: u64,
    pub s_n: f64,
    pub cutoff: u64,
    pub seed: u64,
    pub bins: Vec<BinEstimate>,
    /// log of the estimated P(S_n = N) used as the denominator.
    pub log_denominator: f64,
}

/// Integer maxima covered by bin [lo, hi): lo·n^γ ≤ M < hi·n^γ.
fn bin_int_range(lo: f64, hi: f64, ng: f64) -> (u64, i64) {
    let a = (lo * ng).ceil().max(0.0) as u64;
    let b = (hi * ng).ceil() as i64 - 1;
    (a, b)
}

/// Smallest cap m ≥ floor_m making P(any of n variables exceeds m) ≤ 1e−4,
/// via the rigorous series tail bound. Used as the remainder cap of planted
/// strata so the neglected two-big-jumps configurations stay below the
/// sampling noise.
fn negligible_tail_cutoff(params: &ModelParams, n: u64, floor_m: u64) -> u64 {
    let mut m = floor_m.max(4);
    loop {
        if let Ok(tb) = model::tail_bound(params.alpha, 0, m) {
            if n as f64 * params.c * tb.bound <= 1e-4 {
                return m;
            }
        }
        m += (m / 2).max(1);
        if m > 1_000_000 {
            return m;
        }
    }
}

/// Per-bin conditional estimates: direct tilted runs fill bins at or below
/// the cutoff, planted-value strata fill bins above it.
pub fn mc_max_histogram(
    params: &ModelParams,
    spec: &HistogramSpec,
) -> Result<MaxHistogram, McError> {
    if spec.y_edges.len() < 2
        || spec.y_edges.windows(2).any(|w| w[1] <= w[0])
        || spec.y_edges[0] < 0.0
    {
        return Err(McError::BadBins);
    }
    if spec.batches < 2 {
        return Err(McError::TooFewBatches(spec.batches));
    }
    if spec.batch_size == 0 {
        return Err(McError::EmptyBatch);
    }
    let n = spec.n;
    let nf = n as f64;
    let ng = nf.powf(params.gamma);
    let (n_target, s_n) = lattice_target(params, spec.s, n);
    let sampler = build_sampler(params, n, spec.s, spec.kappa, spec.seed)?;
    let cutoff = sampler.cutoff();
    let nbins = spec.y_edges.len() - 1;
    let batches = spec.batches;

    // direct part: joint mass per bin restricted to {M ≤ cutoff}, per batch
    let log_weight = nf * sampler.log_norm() - sampler.tilt() * n_target as f64;
    let weight = log_weight.exp();
    let direct: Vec<(Vec<f64>, Vec<u64>, f64)> = run_batches(batches, spec.threads, |b| {
        let mut rng = SplitMix64::stream(spec.seed, b as u64);
        let mut counts = vec![0u64; nbins];
        let mut total_hits = 0u64;
        for _ in 0..spec.batch_size {
            let mut sum = 0u64;
            let mut max = 0u64;
            for _ in 0..n {
                let x = sampler.draw(&mut rng);
                sum += x;
                max = max.max(x);
            }
            if sum != n_target {
                continue;
            }
            total_hits += 1;
            for (j, edges) in spec.y_edges.windows(2).enumerate() {
                let (lo_int, hi_int) = bin_int_range(edges[0], edges[1], ng);
                if max >= lo_int && (max as i64) <= hi_int {
                    counts[j] += 1;
                    break;
                }
            }
        }
        let joint: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 / spec.batch_size as f64 * weight)
            .collect();
        let denom = total_hits as f64 / spec.batch_size as f64 * weight;
        (joint, counts, denom)
    });

    // planted strata per bin above the cutoff: one remainder run per bin
    let mut planted_joint = vec![vec![0.0f64; batches]; nbins];
    let mut planted_hits = vec![0u64; nbins];
    for j in 0..nbins {
        let (lo_int, hi_int) = bin_int_range(spec.y_edges[j], spec.y_edges[j + 1], ng);
        let a_lo = lo_int.max(cutoff + 1);
        let a_hi = (hi_int.min(n_target as i64)).max(-1);
        if a_hi < a_lo as i64 {
            continue;
        }
        let a_hi = a_hi as u64;
        let a_mid = (a_lo + a_hi) / 2;
        let rest_n = n - 1;
        let rest_cap = negligible_tail_cutoff(params, n, cutoff).min(a_lo.saturating_sub(1));
        let rest_target = (n_target - a_mid) as f64 / rest_n as f64;
        if rest_cap == 0 || rest_target <= 0.0 || rest_target >= rest_cap as f64 {
            continue;
        }
        let cgf = TruncatedCgf::new(*params, rest_cap)?;
        let t = model::solve_tilt(&cgf, rest_target)?;
        let log_norm = cgf.value(t);
        let table = tilted_cumulative(params, rest_cap, t);
        let inner = TiltedSampler {
            params: *params,
            cutoff: rest_cap,
            t,
            table,
            log_norm,
            seed: spec.seed,
        };
        let results: Vec<(f64, u64)> = run_batches(batches, spec.threads, |b| {
            let stream = ((j as u64 + 1) << 32) | b as u64;
            let mut rng = SplitMix64::stream(spec.seed, stream);
            // histogram of remainder sums over the targets this bin needs
            let lo_needed = n_target - a_hi;
            let hi_needed = n_target - a_lo;
            let mut counts = vec![0u64; (hi_needed - lo_needed + 1) as usize];
            for _ in 0..spec.batch_size {
                let mut sum = 0u64;
                for _ in 0..rest_n {
                    sum += inner.draw(&mut rng);
                }
                if sum >= lo_needed && sum <= hi_needed {
                    counts[(sum - lo_needed) as usize] += 1;
                }
            }
            let mut joint = 0.0;
            let mut hits = 0u64;
            for a in a_lo..=a_hi {
                let c = counts[(n_target - a - lo_needed) as usize];
                if c == 0 {
                    continue;
                }
                hits += c;
                let log_rest = (c as f64 / spec.batch_size as f64).ln()
                    + rest_n as f64 * inner.log_norm()
                    - inner.tilt() * (n_target - a) as f64;
                joint += (nf.ln() + params.log_pmf(a) + log_rest).exp();
            }
            (joint, hits)
        });
        for (b, (joint, hits)) in results.into_iter().enumerate() {
            planted_joint[j][b] = joint;
            planted_hits[j] += hits;
        }
    }

    // per-batch conditionals so the error bar includes denominator noise
    let mut bins = Vec::with_capacity(nbins);
    let denom_by_batch: Vec<f64> = (0..batches)
        .map(|b| direct[b].2 + (0..nbins).map(|j| planted_joint[j][b]).sum::<f64>())
        .collect();
    let mean_denom = denom_by_batch.iter().sum::<f64>() / batches as f64;
    for j in 0..nbins {
        let ratios: Vec<f64> = (0..batches)
            .map(|b| {
                let num = direct[b].0[j] + planted_joint[j][b];
                if denom_by_batch[b] > 0.0 {
                    num / denom_by_batch[b]
                } else {
                    0.0
                }
            })
            .collect();
        let hits: u64 = direct.iter().map(|d| d.1[j]).sum::<u64>() + planted_hits[j];
        let mean = ratios.iter().sum::<f64>() / batches as f64;
        let var =
            ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (batches as f64 - 1.0);
        bins.push(BinEstimate {
            y_lo: spec.y_edges[j],
            y_hi: spec.y_edges[j + 1],
            conditional: mean,
            standard_error: (var / batches as f64).sqrt(),
            hits,
            flagged_empty: hits == 0,
        });
    }

    Ok(MaxHistogram {
        n,
        n_target,
        s_n,
        cutoff,
        seed: spec.seed,
        bins,
        log_denominator: if mean_denom > 0.0 {
            mean_denom.ln()
        } else {
            f64::NEG_INFINITY
        },
    })
}

impl MaxHistogram {
    pub fn csv(&self) -> String {
        let mut out = String::from("y_lo,y_hi,estimate,se,hits,seed\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.y_lo, b.y_hi, b.conditional, b.standard_error, b.hits, self.seed
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlaw;
    use crate::model::derive_params;
    use crate::ratefn;

    fn params_half() -> ModelParams {
        derive_params(0.5, 1e-12).unwrap()
    }

    #[test]
    fn sampler_construction_zero_tilt() {
        // s = 0 keeps the target at the (truncated) mean, so |t| stays small
        let p = params_half();
        let sampler = build_sampler(&p, 4096, 0.0, 0.5, 1).unwrap();
        assert!(sampler.tilt().abs() < 0.01, "t = {}", sampler.tilt());
        let cum = sampler.cumulative();
        assert_eq!(*cum.last().unwrap(), 1.0);
        for w in cum.windows(2) {
            assert!(w[1] > w[0], "cumulative table must strictly increase");
        }
        // very long tables are still monotone, just not past f64 resolution
        let long = build_sampler(&p, 4096, 0.0, 6.0, 1).unwrap();
        assert_eq!(*long.cumulative().last().unwrap(), 1.0);
        for w in long.cumulative().windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn sampler_mean_matches_requested_target() {
        let p = params_half();
        let n = 64;
        let sampler = build_sampler(&p, n, 1.0, 0.5, 7).unwrap();
        let (n_target, _) = lattice_target(&p, 1.0, n);
        assert!((sampler.mean() - n_target as f64 / n as f64).abs() < 1e-9);
    }

    #[test]
    fn sampled_mean_agrees_with_tilted_mean() {
        let p = params_half();
        let sampler = build_sampler(&p, 64, 1.0, 0.5, 99).unwrap();
        let mut rng = SplitMix64::new(123);
        let draws = 1_000_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..draws {
            let x = sampler.draw(&mut rng) as f64;
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / draws as f64;
        let var = sumsq / draws as f64 - mean * mean;
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - sampler.mean()).abs() <= 5.0 * se,
            "sampled mean {mean} vs {} (se {se})",
            sampler.mean()
        );
    }

    #[test]
    fn infeasible_cutoff_is_rejected_up_front() {
        // cutoff ⌊0.3·16⌋ = 4 cannot reach the target mean 302/64 ≈ 4.72
        let p = params_half();
        let err = build_sampler(&p, 64, 1.0, 0.3, 1).unwrap_err();
        assert!(matches!(
            err,
            McError::Model(ModelError::TiltTargetOutOfRange { .. })
        ));
    }

    #[test]
    fn determinism_same_seed_same_stream() {
        let p = params_half();
        let sampler = build_sampler(&p, 32, 1.0, 0.5, 2024).unwrap();
        let a = estimate_conditioned(
            &sampler,
            32,
            exactlaw::lattice_target(&p, 1.0, 32).0,
            4,
            400,
            1,
        )
        .unwrap();
        let b = estimate_conditioned(
            &sampler,
            32,
            exactlaw::lattice_target(&p, 1.0, 32).0,
            4,
            400,
            1,
        )
        .unwrap();
        assert_eq!(a, b);
        // thread count must not change the result, only the schedule
        let c = estimate_conditioned(
            &sampler,
            32,
            exactlaw::lattice_target(&p, 1.0, 32).0,
            4,
            400,
            2,
        )
        .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn estimate_matches_exact_oracle_n64() {
        let p = params_half();
        let (n, s, kappa) = (64u64, 1.0, 0.5);
        let (n_target, _) = lattice_target(&p, s, n);
        let sampler = build_sampler(&p, n, s, kappa, 31).unwrap();
        let est = estimate_conditioned(&sampler, n, n_target, 10, 4000, 2).unwrap();
        assert!(est.hit_count >= 100, "only {} hits", est.hit_count);
        let cap = sampler.cutoff();
        let exact = exactlaw::sum_law(&p, n, n_target, Some(cap))
            .unwrap()
            .log_at(n_target);
        let dev = (est.log_probability - exact).abs();
        assert!(
            dev <= 3.0 * est.standard_error_log,
            "MC {} vs exact {} at {}σ",
            est.log_probability,
            exact,
            dev / est.standard_error_log
        );
    }

    #[test]
    fn hit_rate_scales_like_inverse_sqrt_n() {
        // κ = 6 keeps the tilted variance essentially n-independent, so the
        // local-CLT prefactor 1/√(2πnσ̂²) carries the whole n-dependence
        let p = params_half();
        let mut rates = Vec::new();
        for n in [64u64, 256] {
            let (n_target, _) = lattice_target(&p, 1.0, n);
            let sampler = build_sampler(&p, n, 1.0, 6.0, 5).unwrap();
            let est = estimate_conditioned(&sampler, n, n_target, 8, 8000, 2).unwrap();
            rates.push(est.hit_count as f64 / est.n_samples as f64);
        }
        let ratio = rates[1] / rates[0];
        // ideal √(64/256) = 1/2; accept [0.5, 2]× that
        assert!(
            (0.25..=1.0).contains(&ratio),
            "hit-rate ratio {ratio} outside [0.25, 1]"
        );
    }

    #[test]
    fn doubling_batch_size_shrinks_the_error_bar() {
        let p = params_half();
        let (n, s) = (32u64, 1.0);
        let (n_target, _) = lattice_target(&p, s, n);
        let sampler = build_sampler(&p, n, s, 0.5, 77).unwrap();
        let small = estimate_conditioned(&sampler, n, n_target, 8, 2000, 2).unwrap();
        let big = estimate_conditioned(&sampler, n, n_target, 8, 8000, 2).unwrap();
        // 4× the work should cut the SE about in half; allow a factor-2 band
        let ratio = big.standard_error_log / small.standard_error_log;
        assert!(
            (0.25..=1.0).contains(&ratio),
            "se ratio {ratio} not in [0.25, 1]"
        );
    }

    #[test]
    fn zero_hits_reported_not_fabricated() {
        let p = params_half();
        // absurdly small sampling effort for a rare lattice point
        let sampler = build_sampler(&p, 64, 1.0, 0.5, 3).unwrap();
        let est = estimate_conditioned(&sampler, 64, 1, 2, 3, 1).unwrap();
        assert_eq!(est.hit_count, 0);
        assert_eq!(est.log_probability, f64::NEG_INFINITY);
        assert!(est.standard_error_log.is_infinite());
    }

    #[test]
    fn degenerate_cutoff_change_of_measure_is_exact() {
        // cutoff 0 turns the sampling law into the point mass at 0 and the
        // estimate into the closed form c^n
        let p = params_half();
        let n = 16u64;
        let s = -(p.mu * n as f64 + 0.5) / (n as f64).powf(p.gamma);
        let sampler = build_sampler(&p, n, s, 0.1, 9).unwrap();
        assert_eq!(sampler.cutoff(), 0);
        let est = estimate_conditioned(&sampler, n, 0, 2, 100, 1).unwrap();
        assert_eq!(est.log_probability, (n as f64) * p.c.ln());
        assert_eq!(est.standard_error_log, 0.0);
        assert_eq!(est.hit_count, 200);
    }

    #[test]
    fn unbiased_coverage_at_small_n() {
        let p = params_half();
        let (n, s, kappa) = (32u64, 1.0, 0.5);
        let (n_target, _) = lattice_target(&p, s, n);
        let cap = build_sampler(&p, n, s, kappa, 0).unwrap().cutoff();
        let exact = exactlaw::sum_law(&p, n, n_target, Some(cap))
            .unwrap()
            .log_at(n_target);
        let mut covered = 0;
        for rep in 0..50u64 {
            let sampler = build_sampler(&p, n, s, kappa, 1000 + rep).unwrap();
            let est = estimate_conditioned(&sampler, n, n_target, 8, 1500, 2).unwrap();
            if (est.log_probability - exact).abs() <= 3.0 * est.standard_error_log {
                covered += 1;
            }
        }
        assert!(covered >= 44, "coverage {covered}/50 below 44/50");
    }

    #[test]
    fn histogram_matches_exact_conditioned_law_n64() {
        let p = params_half();
        let spec = HistogramSpec {
            n: 64,
            s: 1.0,
            kappa: 6.0,
            y_edges: vec![0.0, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 9.5],
            batches: 12,
            batch_size: 6000,
            seed: 17,
            threads: 2,
        };
        let hist = mc_max_histogram(&p, &spec).unwrap();
        let ng = (spec.n as f64).powf(p.gamma);
        let mut edges_int: Vec<u64> = Vec::new();
        for w in spec.y_edges.windows(2) {
            let (_, hi) = super::bin_int_range(w[0], w[1], ng);
            edges_int.push(hi as u64);
        }
        // exact conditional masses from capped-law differences
        let grid: Vec<u64> = edges_int.clone();
        let cdf = exactlaw::conditioned_max_cdf(&p, spec.n, hist.n_target, &grid).unwrap();
        let mut prev = 0.0;
        for (j, bin) in hist.bins.iter().enumerate() {
            let exact = cdf[j] - prev;
            prev = cdf[j];
            let dev = (bin.conditional - exact).abs();
            assert!(
                dev <= 3.0 * bin.standard_error.max(1e-4),
                "bin {j} [{}, {}): mc {} vs exact {} ({}σ)",
                bin.y_lo,
                bin.y_hi,
                bin.conditional,
                exact,
                dev / bin.standard_error
            );
        }
        let total: f64 = hist.bins.iter().map(|b| b.conditional).sum();
        let total_se: f64 = hist
            .bins
            .iter()
            .map(|b| b.standard_error * b.standard_error)
            .sum::<f64>()
            .sqrt();
        assert!(
            (total - 1.0).abs() <= 3.0 * total_se.max(1e-3),
            "bins sum to {total}"
        );
    }

    #[test]
    fn histogram_mode_sits_on_the_condensed_minimizer() {
        let p = params_half();
        let s1 = ratefn::thresholds(&p).s1;
        let s = 2.0 * s1;
        let l = ratefn::landscape(&p, s);
        let y2 = l.y2.unwrap();
        let spec = HistogramSpec {
            n: 1024,
            s,
            kappa: 0.5,
            y_edges: vec![y2 - 10.0, y2 - 6.0, y2 - 2.0, y2 + 2.0, y2 + 6.0, y2 + 10.0],
            batches: 8,
            batch_size: 4000,
            seed: 23,
            threads: 2,
        };
        let hist = mc_max_histogram(&p, &spec).unwrap();
        let mode = hist
            .bins
            .iter()
            .max_by(|a, b| a.conditional.partial_cmp(&b.conditional).unwrap())
            .unwrap();
        assert!(
            mode.y_lo <= y2 && y2 < mode.y_hi,
            "mode bin [{}, {}) misses y2 = {y2}",
            mode.y_lo,
            mode.y_hi
        );
        assert!(hist.bins.iter().any(|b| !b.flagged_empty));
    }

    #[test]
    fn histogram_rejects_bad_bins() {
        let p = params_half();
        let bad = HistogramSpec {
            n: 16,
            s: 1.0,
            kappa: 0.5,
            y_edges: vec![1.0, 0.5],
            batches: 2,
            batch_size: 10,
            seed: 0,
            threads: 1,
        };
        assert!(matches!(mc_max_histogram(&p, &bad), Err(McError::BadBins)));
    }
}
