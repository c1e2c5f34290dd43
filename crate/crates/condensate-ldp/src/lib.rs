//! Numerical engine for sums of integer stretched-exponential variables
//! conditioned on large values, the rate functions and thresholds of their
//! rescaled maximum, and the zero-range process whose equilibrium is exactly
//! that conditioned law.
//!
//! The law is P(X = k) = c·exp(−k^α), k ∈ ℕ₀, α ∈ (0,1). Conditioned on
//! S_n = μn + s·n^γ with γ = 1/(2−α), the excess either spreads across all
//! variables (Gaussian cost) or condenses into a few big ones (stretched-
//! exponential cost); both live on the same probability scale exp(−Θ(n^{γα})),
//! which is what makes the analysis delicate and the numerics interesting.
//!
//! Modules:
//! - [`model`]: the law, its constants, tail bounds, the truncated cumulant
//!   generating function and the tilt solver.
//! - [`ratefn`]: the energy landscape g_s, thresholds s0 < s1 < s2, the
//!   Bellman-type rate function f_s by value iteration, and the gap set J_s.
//! - [`exactlaw`]: exact finite-n oracle via log-domain convolutions —
//!   distributions of S_n, of the conditioned maximum, top-two order
//!   statistics, and empirical LDP slopes.
//! - [`montecarlo`]: tilted-and-truncated importance sampling for n beyond
//!   the exact oracle's reach.
//! - [`zrp`]: continuous-time zero-range process simulator with exact
//!   stationarity checks at enumerable sizes.

pub mod exactlaw;
pub mod model;
pub mod montecarlo;
pub mod numeric;
mod par;
pub mod ratefn;
pub mod rng;
pub mod zrp;

pub use model::{derive_params, ModelParams};
pub use ratefn::{gap_set, inf_f, landscape, rate_max, s2, thresholds};

#[cfg(doctest)]
mod booktests {
    #[doc = include_str!("../../../book/src/model.md")]
    mod model_chapter {}
    #[doc = include_str!("../../../book/src/landscape.md")]
    mod landscape_chapter {}
    #[doc = include_str!("../../../book/src/rate-function.md")]
    mod rate_function_chapter {}
    #[doc = include_str!("../../../book/src/exact-oracle.md")]
    mod exact_oracle_chapter {}
    #[doc = include_str!("../../../book/src/importance-sampling.md")]
    mod importance_sampling_chapter {}
    #[doc = include_str!("../../../book/src/zero-range.md")]
    mod zero_range_chapter {}
}
