//! Fully-resolved run configurations.
//!
//! Every run is described by one [`RunConfig`] value with no hidden defaults:
//! the CLI resolves flags (and the `CONDENSATE_LDP_THREADS` fallback) into it,
//! emits it as the run manifest, and `--config` replaces the flag values with
//! a previously emitted manifest so any run can be reproduced bit for bit.
//! Unknown fields in a config file are rejected.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExactOp {
    /// Slopes of log P(S_n = N) against the variational prediction.
    SlopeSum,
    /// Slopes of log P(M_n/n^γ ∈ window | S_n = N).
    SlopeMax,
    /// P(M_n ≤ m | S_n = N) over an m-grid.
    MaxCdf,
    /// Normal-approximation residuals under a cap κ·n^γ.
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum McOp {
    /// One importance-sampling estimate of P(S_n = N, M_n ≤ κ·n^γ).
    Conditioned,
    /// Stratified histogram of the conditioned maximum.
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ZrpOp {
    /// One trajectory with optional thinned snapshots.
    Run,
    /// Time-averaged occupancy against the exact conditioned law.
    Stationary,
    /// Condensation hitting times over replicas.
    Condensation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TopologyArg {
    Complete,
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InitialArg {
    UniformSpread,
    AllAtSiteOne,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsConfig {
    pub alpha: f64,
    pub series_tol: f64,
    pub format: Format,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatefnConfig {
    pub alpha: f64,
    pub s: f64,
    pub grid_step: Option<f64>,
    pub y_max: Option<f64>,
    pub tol: f64,
    pub format: Format,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    pub alpha: f64,
    pub s: f64,
    pub op: ExactOp,
    pub n: Vec<u64>,
    pub kappa: Option<f64>,
    pub window_lo: Option<f64>,
    pub window_hi: Option<f64>,
    pub m_grid: Option<Vec<u64>>,
    pub oracle: bool,
    pub format: Format,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub alpha: f64,
    pub s: f64,
    pub n: u64,
    pub kappa: f64,
    pub op: McOp,
    pub bins: Option<Vec<f64>>,
    pub batches: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub oracle: bool,
    pub format: Format,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZrpRunConfig {
    pub alpha: f64,
    pub sites: usize,
    pub particles: u64,
    pub topology: TopologyArg,
    pub initial: InitialArg,
    pub occupations: Option<Vec<u64>>,
    pub op: ZrpOp,
    pub seed: u64,
    pub max_jumps: Option<u64>,
    pub max_time: Option<f64>,
    pub thin: Option<u64>,
    pub batches: usize,
    pub thetas: Vec<f64>,
    pub replicas: u64,
    pub format: Format,
    pub threads: usize,
}

/// One fully-resolved run: the manifest content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Thresholds(ThresholdsConfig),
    Ratefn(RatefnConfig),
    Exact(ExactConfig),
    Mc(McConfig),
    Zrp(ZrpRunConfig),
}

impl RunConfig {
    /// Canonical JSON of the config; hashed into every output.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// FNV-1a 64 over the canonical JSON, as fixed-width hex.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.canonical_json().as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        RunConfig::Thresholds(ThresholdsConfig {
            alpha: 0.5,
            series_tol: 1e-12,
            format: Format::Csv,
            threads: 1,
        })
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let cfg = RunConfig::Mc(McConfig {
            alpha: 0.5,
            s: 1.0 + 1e-13,
            n: 64,
            kappa: 0.5,
            op: McOp::Conditioned,
            bins: None,
            batches: 10,
            batch_size: 5000,
            seed: 42,
            oracle: true,
            format: Format::Json,
            threads: 2,
        });
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.canonical_json(), cfg.canonical_json());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().canonical_json()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("surprise".into(), serde_json::json!(1));
        let err = serde_json::from_value::<RunConfig>(v);
        assert!(err.is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = sample();
        assert_eq!(a.hash(), a.hash());
        let mut b = a.clone();
        if let RunConfig::Thresholds(t) = &mut b {
            t.alpha = 0.51;
        }
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
