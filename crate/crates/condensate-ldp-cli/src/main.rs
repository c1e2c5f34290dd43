//! Command-line front end: every computation as a reproducible, config-driven
//! run emitting CSV or JSON.
//!
//! Each invocation resolves its flags into one full [`config::RunConfig`]
//! (no hidden defaults), stamps every output with the config hash, and, when
//! writing to a file, drops a `<out>.config.json` manifest next to it.
//! `--config FILE` replaces the flag values with a previously emitted
//! manifest, so any run reproduces bit for bit.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::*;

#[derive(Parser)]
#[command(
    name = "condensate-ldp",
    version,
    about = "Rate functions, exact conditioned laws and zero-range dynamics for integer stretched-exponential variables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Write the output here (default: stdout). Also emits <out>.config.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Load a previously emitted run manifest; it overrides all other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Worker threads (fallback: CONDENSATE_LDP_THREADS, then 1).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Law constants and the landscape thresholds s0 < s1 < s2
    Thresholds {
        /// Tail exponent of the law, in (0,1)
        #[arg(long)]
        alpha: f64,
        /// Series truncation tolerance for c, mu, sigma2
        #[arg(long, default_value_t = 1e-12)]
        series_tol: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rate-function profile (y, f, g, gap_flag) at one conditioning s
    Ratefn {
        #[arg(long)]
        alpha: f64,
        /// Conditioned excess per n^gamma
        #[arg(long)]
        s: f64,
        /// Grid step of the value-iteration table (default: min(s1,1)/400)
        #[arg(long)]
        grid_step: Option<f64>,
        /// Top of the y-grid (default: s; must be >= s)
        #[arg(long)]
        y_max: Option<f64>,
        /// Value-iteration stopping tolerance
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Exact conditioned laws and LDP slopes by log-domain convolution
    Exact {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        s: f64,
        /// Which exact computation to run
        #[arg(long, value_enum)]
        op: ExactOp,
        /// Comma-separated n values (strictly increasing powers of two)
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        /// Truncation level for residual runs
        #[arg(long)]
        kappa: Option<f64>,
        /// Window [lo, hi] in units of n^gamma for slope-max
        #[arg(long)]
        window_lo: Option<f64>,
        #[arg(long)]
        window_hi: Option<f64>,
        /// Comma-separated maxima for max-cdf
        #[arg(long, value_delimiter = ',')]
        m_grid: Option<Vec<u64>>,
        /// Add the brute-force enumeration column (test use; small n only)
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Importance-sampling estimates under the tilted-truncated law
    Mc {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        n: u64,
        /// Truncation level: cutoff = floor(kappa * n^gamma)
        #[arg(long)]
        kappa: f64,
        #[arg(long, value_enum)]
        op: McOp,
        /// Comma-separated y-bin edges for histogram runs
        #[arg(long, value_delimiter = ',')]
        bins: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10)]
        batches: usize,
        #[arg(long, default_value_t = 5000)]
        batch_size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Add the exact-convolution column (test use)
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Zero-range process trajectories, stationarity and condensation times
    Zrp {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        sites: usize,
        #[arg(long)]
        particles: u64,
        #[arg(long, value_enum, default_value = "complete")]
        topology: TopologyArg,
        #[arg(long, value_enum, default_value = "uniform-spread")]
        initial: InitialArg,
        /// Explicit initial occupations (with --initial explicit)
        #[arg(long, value_delimiter = ',')]
        occupations: Option<Vec<u64>>,
        #[arg(long, value_enum)]
        op: ZrpOp,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        max_jumps: Option<u64>,
        #[arg(long)]
        max_time: Option<f64>,
        /// Snapshot every this many jumps
        #[arg(long)]
        thin: Option<u64>,
        /// Time batches for the stationary error bars
        #[arg(long, default_value_t = 10)]
        batches: usize,
        /// Condensation thresholds as fractions of the excess
        #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.6, 0.9])]
        thetas: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        replicas: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn threads_from(common: &CommonArgs) -> usize {
    common
        .threads
        .or_else(|| {
            std::env::var("CONDENSATE_LDP_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
}

fn command_tag(cfg: &RunConfig) -> &'static str {
    match cfg {
        RunConfig::Thresholds(_) => "thresholds",
        RunConfig::Ratefn(_) => "ratefn",
        RunConfig::Exact(_) => "exact",
        RunConfig::Mc(_) => "mc",
        RunConfig::Zrp(_) => "zrp",
    }
}

fn load_config(path: &Path, expect: &str) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    if command_tag(&cfg) != expect {
        return Err(CliError::Usage(format!(
            "config {} describes a `{}` run but the `{expect}` subcommand was invoked",
            path.display(),
            command_tag(&cfg)
        )));
    }
    Ok(cfg)
}

fn resolve(cli: Cli) -> Result<(RunConfig, Option<PathBuf>), CliError> {
    let (from_flags, common) = match cli.command {
        Command::Thresholds {
            alpha,
            series_tol,
            common,
        } => (
            RunConfig::Thresholds(ThresholdsConfig {
                alpha,
                series_tol,
                format: common.format,
                threads: threads_from(&common),
            }),
            common,
        ),
        Command::Ratefn {
            alpha,
            s,
            grid_step,
            y_max,
            tol,
            common,
        } => (
            RunConfig::Ratefn(RatefnConfig {
                alpha,
                s,
                grid_step,
                y_max,
                tol,
                format: common.format,
                threads: threads_from(&common),
            }),
            common,
        ),
        Command::Exact {
            alpha,
            s,
            op,
            n,
            kappa,
            window_lo,
            window_hi,
            m_grid,
            oracle,
            common,
        } => (
            RunConfig::Exact(ExactConfig {
                alpha,
                s,
                op,
                n,
                kappa,
                window_lo,
                window_hi,
                m_grid,
                oracle,
                format: common.format,
                threads: threads_from(&common),
            }),
            common,
        ),
        Command::Mc {
            alpha,
            s,
            n,
            kappa,
            op,
            bins,
            batches,
            batch_size,
            seed,
            oracle,
            common,
        } => (
            RunConfig::Mc(McConfig {
                alpha,
                s,
                n,
                kappa,
                op,
                bins,
                batches,
                batch_size,
                seed,
                oracle,
                format: common.format,
                threads: threads_from(&common),
            }),
            common,
        ),
        Command::Zrp {
            alpha,
            sites,
            particles,
            topology,
            initial,
            occupations,
            op,
            seed,
            max_jumps,
            max_time,
            thin,
            batches,
            thetas,
            replicas,
            common,
        } => (
            RunConfig::Zrp(ZrpRunConfig {
                alpha,
                sites,
                particles,
                topology,
                initial,
                occupations,
                op,
                seed,
                max_jumps,
                max_time,
                thin,
                batches,
                thetas,
                replicas,
                format: common.format,
                threads: threads_from(&common),
            }),
            common,
        ),
    };
    let config = match &common.config {
        Some(path) => load_config(path, command_tag(&from_flags))?,
        None => from_flags,
    };
    Ok((config, common.out))
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (config, out) = resolve(cli)?;
    let body = commands::execute(&config)?;
    match out {
        Some(path) => {
            std::fs::write(&path, &body)
                .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))?;
            let manifest = manifest_path(&path);
            let mut doc = serde_json::to_string_pretty(&config).expect("config serializes");
            doc.push('\n');
            std::fs::write(&manifest, doc)
                .map_err(|e| CliError::Run(format!("cannot write {}: {e}", manifest.display())))?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
