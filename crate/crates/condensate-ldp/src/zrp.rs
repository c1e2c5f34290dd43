//! Continuous-time zero-range process.
//!
//! Particles hop on {1, …, n}: a particle leaves site x at rate g(η_x)
//! depending only on the local occupation, and lands on y with the symmetric
//! hopping probability p(x, y). With
//!
//! ```text
//! g(0) = 0,   g(k) = exp(k^α − (k−1)^α)   (k ≥ 1),
//! ```
//!
//! the N-particle process is reversible with equilibrium law exactly the
//! conditioned product law P_{n,N}(η) ∝ Π_x exp(−η_x^α): detailed balance
//! π(η)·g(η_x)·p(x,y) = π(η^{x,y})·g(η_y + 1)·p(y,x) holds identically.
//!
//! Simulation is the direct (Gillespie) method: exponential holding time at
//! the total rate, departure site proportional to g(η_x) via a sum tree
//! (two leaf updates per jump), then the destination. One trajectory is
//! strictly sequential; replicas run on independent seed-derived streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model;
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum ZrpError {
    #[error("config invalid: {0}")]
    Config(String),
    #[error("state space too large to enumerate: {states} compositions (limit {limit})")]
    EnumerationTooLarge { states: u64, limit: u64 },
    #[error("all sites empty with {particles} particles supposedly present")]
    BrokenInvariant { particles: u64 },
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// p(x, y) = 1/(n−1) for all y ≠ x.
    Complete,
    /// Nearest neighbours on a cycle, 1/2 each.
    Ring,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// ⌊N/n⌋ everywhere, remainder on the lowest-indexed sites.
    UniformSpread,
    AllAtSiteOne,
    Explicit(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZrpConfig {
    pub n_sites: usize,
    pub n_particles: u64,
    pub alpha: f64,
    pub topology: Topology,
    pub seed: u64,
    pub initial: Initial,
}

impl ZrpConfig {
    pub fn validate(&self) -> Result<(), ZrpError> {
        if self.n_sites < 2 {
            return Err(ZrpError::Config(format!(
                "need at least 2 sites, got {}",
                self.n_sites
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ZrpError::Config(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if let Initial::Explicit(v) = &self.initial {
            if v.len() != self.n_sites {
                return Err(ZrpError::Config(format!(
                    "explicit initial has {} sites, config says {}",
                    v.len(),
                    self.n_sites
                )));
            }
            let total: u64 = v.iter().sum();
            if total != self.n_particles {
                return Err(ZrpError::Config(format!(
                    "explicit initial holds {total} particles, config says {}",
                    self.n_particles
                )));
            }
        }
        Ok(())
    }

    pub fn initial_occupations(&self) -> Vec<u64> {
        match &self.initial {
            Initial::Explicit(v) => v.clone(),
            Initial::AllAtSiteOne => {
                let mut v = vec![0; self.n_sites];
                v[0] = self.n_particles;
                v
            }
            Initial::UniformSpread => {
                let base = self.n_particles / self.n_sites as u64;
                let rem = (self.n_particles % self.n_sites as u64) as usize;
                (0..self.n_sites)
                    .map(|i| base + u64::from(i < rem))
                    .collect()
            }
        }
    }
}

/// One trajectory's configuration, elapsed time and jump counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZrpState {
    pub occupations: Vec<u64>,
    pub time: f64,
    pub jump_count: u64,
}

/// Departure rate out of a site holding k particles.
pub fn jump_rate(alpha: f64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let kf = k as f64;
    (kf.powf(alpha) - (kf - 1.0).powf(alpha)).exp()
}

/// Sum tree over per-site rates: O(log n) update and weighted selection.
#[derive(Debug, Clone)]
struct RateTree {
    size: usize,
    nodes: Vec<f64>,
}

impl RateTree {
    fn build(rates: &[f64]) -> Self {
        let size = rates.len().next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * size];
        nodes[size..size + rates.len()].copy_from_slice(rates);
        for i in (1..size).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self { size, nodes }
    }

    fn update(&mut self, leaf: usize, rate: f64) {
        let mut i = self.size + leaf;
        self.nodes[i] = rate;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn leaf(&self, i: usize) -> f64 {
        self.nodes[self.size + i]
    }

    /// Site with cumulative rate containing u ∈ [0, total).
    fn select(&self, u: f64) -> usize {
        let mut i = 1;
        let mut u = u;
        while i < self.size {
            let left = self.nodes[2 * i];
            if u < left {
                i *= 2;
            } else {
                u -= left;
                i = 2 * i + 1;
            }
        }
        let mut leaf = i - self.size;
        // rounding can land on a zero-rate or padding leaf; walk back
        while leaf > 0 && self.leaf(leaf) == 0.0 {
            leaf -= 1;
        }
        leaf
    }
}

/// A trajectory in progress: state plus the incrementally maintained rates.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: ZrpConfig,
    state: ZrpState,
    tree: RateTree,
}

impl Simulator {
    pub fn new(config: ZrpConfig) -> Result<Self, ZrpError> {
        config.validate()?;
        let occ = config.initial_occupations();
        Self::from_occupations(config, occ, 0.0, 0)
    }

    pub fn from_state(config: ZrpConfig, state: ZrpState) -> Result<Self, ZrpError> {
        config.validate()?;
        Self::from_occupations(config, state.occupations, state.time, state.jump_count)
    }

    fn from_occupations(
        config: ZrpConfig,
        occupations: Vec<u64>,
        time: f64,
        jump_count: u64,
    ) -> Result<Self, ZrpError> {
        if occupations.len() != config.n_sites {
            return Err(ZrpError::Config("state/config size mismatch".into()));
        }
        let rates: Vec<f64> = occupations
            .iter()
            .map(|&k| jump_rate(config.alpha, k))
            .collect();
        Ok(Self {
            tree: RateTree::build(&rates),
            state: ZrpState {
                occupations,
                time,
                jump_count,
            },
            config,
        })
    }

    pub fn state(&self) -> &ZrpState {
        &self.state
    }

    pub fn config(&self) -> &ZrpConfig {
        &self.config
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    fn destination(&self, from: usize, rng: &mut SplitMix64) -> usize {
        let n = self.config.n_sites;
        match self.config.topology {
            Topology::Complete => {
                let k = rng.next_below(n as u64 - 1) as usize;
                if k >= from {
                    k + 1
                } else {
                    k
                }
            }
            Topology::Ring => {
                if n == 2 {
                    1 - from
                } else if rng.next_f64() < 0.5 {
                    (from + n - 1) % n
                } else {
                    (from + 1) % n
                }
            }
        }
    }

    /// One Gillespie step: holding time at the total rate, departure site
    /// proportional to g(η_x), then the destination draw. Returns false
    /// (state untouched) when nothing can move.
    pub fn step(&mut self, rng: &mut SplitMix64) -> Result<bool, ZrpError> {
        let total = self.tree.total();
        if total <= 0.0 {
            if self.config.n_particles > 0 {
                return Err(ZrpError::BrokenInvariant {
                    particles: self.config.n_particles,
                });
            }
            return Ok(false);
        }
        let dt = rng.next_exp(total);
        let from = self.tree.select(rng.next_f64() * total);
        let to = self.destination(from, rng);
        self.state.time += dt;
        self.state.jump_count += 1;
        self.state.occupations[from] -= 1;
        self.state.occupations[to] += 1;
        let alpha = self.config.alpha;
        self.tree
            .update(from, jump_rate(alpha, self.state.occupations[from]));
        self.tree
            .update(to, jump_rate(alpha, self.state.occupations[to]));
        Ok(true)
    }
}

/// One Gillespie transition of a bare state (rates assembled on the fly);
/// identical draw sequence to [`Simulator::step`].
pub fn step(
    state: &ZrpState,
    config: &ZrpConfig,
    rng: &mut SplitMix64,
) -> Result<ZrpState, ZrpError> {
    let mut sim = Simulator::from_state(config.clone(), state.clone())?;
    sim.step(rng)?;
    Ok(sim.state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    MaxTime(f64),
    MaxJumps(u64),
}

/// Trajectory summary: final state plus optional thinned snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_state: ZrpState,
    pub snapshots: Vec<ZrpState>,
    /// True when a MaxTime run was cut off with moves still possible.
    pub censored: bool,
}

/// Run a trajectory to the stop rule, recording a snapshot every `thin`
/// jumps when requested. Deterministic given the config seed.
pub fn run(config: &ZrpConfig, stop: StopRule, thin: Option<u64>) -> Result<RunSummary, ZrpError> {
    let mut sim = Simulator::new(config.clone())?;
    let mut rng = SplitMix64::new(config.seed);
    let mut snapshots = Vec::new();
    let mut censored = false;
    loop {
        match stop {
            StopRule::MaxJumps(m) => {
                if sim.state().jump_count >= m {
                    break;
                }
            }
            StopRule::MaxTime(t) => {
                if sim.state().time >= t {
                    break;
                }
                if sim.total_rate() <= 0.0 {
                    // frozen system: time formally advances to the horizon
                    sim.state.time = t;
                    break;
                }
            }
        }
        if !sim.step(&mut rng)? {
            if let StopRule::MaxTime(t) = stop {
                sim.state.time = t;
            }
            break;
        }
        if let StopRule::MaxTime(t) = stop {
            if sim.state().time > t {
                censored = true;
            }
        }
        if let Some(k) = thin {
            if k > 0 && sim.state().jump_count % k == 0 {
                snapshots.push(sim.state().clone());
            }
        }
    }
    Ok(RunSummary {
        final_state: sim.state().clone(),
        snapshots,
        censored,
    })
}

/// Enumerate all compositions of `total` into `parts` nonnegative parts.
fn compositions(parts: usize, total: u64) -> Vec<Vec<u64>> {
    fn rec(parts: usize, total: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=total {
            prefix.push(k);
            rec(parts - 1, total - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(parts, total, &mut Vec::new(), &mut out);
    out
}

/// Exact equilibrium law P_{n,N}(η) ∝ Π_x exp(−η_x^α) over compositions.
pub fn exact_stationary_law(
    n_sites: usize,
    n_particles: u64,
    alpha: f64,
) -> Result<Vec<(Vec<u64>, f64)>, ZrpError> {
    const LIMIT: u64 = 2_000_000;
    let states = compositions_count(n_sites, n_particles);
    if states > LIMIT {
        return Err(ZrpError::EnumerationTooLarge {
            states,
            limit: LIMIT,
        });
    }
    let comps = compositions(n_sites, n_particles);
    let mut weights: Vec<f64> = comps
        .iter()
        .map(|c| (-c.iter().map(|&k| (k as f64).powf(alpha)).sum::<f64>()).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(comps.into_iter().zip(weights).collect())
}

fn compositions_count(parts: usize, total: u64) -> u64 {
    // C(total + parts − 1, parts − 1), saturating
    let mut acc: u64 = 1;
    for i in 0..(parts as u64 - 1) {
        acc = acc.saturating_mul(total + i + 1) / (i + 1);
    }
    acc
}

/// Result of a stationarity verification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryReport {
    /// Total-variation distance between the time-averaged occupancy law and
    /// the exact conditioned law.
    pub tv: f64,
    /// TV of each contiguous time segment against the exact law.
    pub batch_tv: Vec<f64>,
    pub jumps: u64,
    pub elapsed: f64,
    pub states: usize,
    /// Mean occupation per site over the thinned snapshots; on the complete
    /// graph exchangeability makes these agree within sampling error.
    pub site_means: Vec<f64>,
    pub snapshots: u64,
}

/// Verify stationarity at enumerable sizes.
///
/// The empirical occupation law is the exact time average of the trajectory
/// (time spent in each state over total time), compared in total variation
/// against the conditioned law P_{n,N}. The run is split into `batches`
/// contiguous segments whose individual TVs give an error feel; a snapshot
/// taken every `thin` jumps feeds the per-site occupation means.
pub fn stationary_check(
    config: &ZrpConfig,
    run_length_jumps: u64,
    thin: u64,
    batches: usize,
) -> Result<StationaryReport, ZrpError> {
    use std::collections::HashMap;
    let exact = exact_stationary_law(config.n_sites, config.n_particles, config.alpha)?;
    let index: HashMap<&[u64], usize> = exact
        .iter()
        .enumerate()
        .map(|(i, (c, _))| (c.as_slice(), i))
        .collect();
    let mut sim = Simulator::new(config.clone())?;
    let mut rng = SplitMix64::new(config.seed);
    let nbatches = batches.max(1);
    let thin = thin.max(1);
    let mut time_in = vec![0.0f64; exact.len()];
    let mut batch_time_in = vec![vec![0.0f64; exact.len()]; nbatches];
    let mut site_sums = vec![0.0f64; config.n_sites];
    let mut snapshots = 0u64;
    let per_batch = run_length_jumps.div_ceil(nbatches as u64).max(1);
    while sim.state().jump_count < run_length_jumps {
        let i = *index
            .get(sim.state().occupations.as_slice())
            .expect("conservation keeps the state enumerable");
        let before = sim.state().time;
        if !sim.step(&mut rng)? {
            break;
        }
        let dt = sim.state().time - before;
        time_in[i] += dt;
        let b = ((sim.state().jump_count - 1) / per_batch).min(nbatches as u64 - 1) as usize;
        batch_time_in[b][i] += dt;
        if sim.state().jump_count % thin == 0 {
            snapshots += 1;
            for (acc, &k) in site_sums.iter_mut().zip(&sim.state().occupations) {
                *acc += k as f64;
            }
        }
    }
    let elapsed: f64 = time_in.iter().sum();
    let tv = 0.5
        * exact
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (time_in[i] / elapsed - p).abs())
            .sum::<f64>();
    let batch_tv = batch_time_in
        .iter()
        .map(|counts| {
            let t: f64 = counts.iter().sum();
            if t == 0.0 {
                return 1.0;
            }
            0.5 * exact
                .iter()
                .enumerate()
                .map(|(i, (_, p))| (counts[i] / t - p).abs())
                .sum::<f64>()
        })
        .collect();
    let site_means = site_sums
        .iter()
        .map(|s| s / (snapshots.max(1) as f64))
        .collect();
    Ok(StationaryReport {
        tv,
        batch_tv,
        jumps: sim.state().jump_count,
        elapsed,
        states: exact.len(),
        site_means,
        snapshots,
    })
}

/// Hitting times of the condensation event per replica.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CondensationReport {
    pub thetas: Vec<f64>,
    /// Particle excess N − μ·n used for the thresholds.
    pub excess: f64,
    /// hit_times[r][i] = first time max_x η_x ≥ thetas[i]·excess in replica
    /// r; None when censored at max_time.
    pub hit_times: Vec<Vec<Option<f64>>>,
    pub medians: Vec<Option<f64>>,
}

/// First times a site accumulates a θ-fraction of the particle excess.
///
/// Exploratory measurement: replicas run concurrently on independent
/// seed-derived streams and merge in replica order, censored at `max_time`.
/// The trajectory starts from a uniform spread (required), and hit times for
/// all θ come from one pass, so they are monotone in θ pathwise on matched
/// seeds.
pub fn condensation_time(
    config: &ZrpConfig,
    thetas: &[f64],
    replicas: u64,
    max_time: f64,
    threads: usize,
) -> Result<CondensationReport, ZrpError> {
    config.validate()?;
    if config.initial != Initial::UniformSpread {
        return Err(ZrpError::Config(
            "condensation timing starts from a uniform spread".into(),
        ));
    }
    if thetas.is_empty() || thetas.iter().any(|&t| !(0.0..1.0).contains(&t) || t == 0.0) {
        return Err(ZrpError::Config("thetas must lie in (0, 1)".into()));
    }
    let params = model::derive_params(config.alpha, 1e-10)?;
    let excess = config.n_particles as f64 - params.mu * config.n_sites as f64;
    if excess <= 0.0 {
        return Err(ZrpError::Config(format!(
            "no particle excess: N = {} vs mu*n = {:.3}",
            config.n_particles,
            params.mu * config.n_sites as f64
        )));
    }
    let per_replica: Vec<Result<Vec<Option<f64>>, ZrpError>> =
        crate::par::run_indexed(replicas as usize, threads, |r| {
            let mut sim = Simulator::new(config.clone())?;
            let mut rng = SplitMix64::stream(config.seed, r as u64);
            let mut hits: Vec<Option<f64>> = vec![None; thetas.len()];
            let mut next = 0usize;
            let check =
                |occ: &[u64], level: f64| occ.iter().copied().max().unwrap_or(0) as f64 >= level;
            while next < thetas.len() && check(&sim.state().occupations, thetas[next] * excess) {
                hits[next] = Some(sim.state().time);
                next += 1;
            }
            while next < thetas.len() && sim.state().time < max_time {
                if !sim.step(&mut rng)? {
                    break;
                }
                while next < thetas.len() && check(&sim.state().occupations, thetas[next] * excess)
                {
                    hits[next] = Some(sim.state().time);
                    next += 1;
                }
            }
            Ok(hits)
        });
    let mut hit_times = Vec::with_capacity(replicas as usize);
    for r in per_replica {
        hit_times.push(r?);
    }
    let medians = (0..thetas.len())
        .map(|i| {
            let mut col: Vec<f64> = hit_times
                .iter()
                .map(|h| h[i].unwrap_or(f64::INFINITY))
                .collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = col[col.len() / 2];
            m.is_finite().then_some(m)
        })
        .collect();
    Ok(CondensationReport {
        thetas: thetas.to_vec(),
        excess,
        hit_times,
        medians,
    })
}
