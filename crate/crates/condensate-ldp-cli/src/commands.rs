//! Execution of resolved run configurations into output text.
//!
//! CSV outputs start with a `# config_hash=…` comment line; JSON outputs
//! carry the hash and the full config as fields (a leading comment would not
//! be JSON). Floats are printed with the shortest round-trip representation,
//! so identical runs produce identical bytes.

use condensate_ldp::{exactlaw, model, montecarlo, ratefn, zrp};
use serde_json::json;

use crate::config::*;

#[derive(Debug)]
pub enum CliError {
    /// Bad request: wrong flags, invalid parameter ranges, unusable grids.
    Usage(String),
    /// The computation itself refused or failed.
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(usage(format!(
            "alpha must lie strictly in (0,1), got {alpha}"
        )))
    }
}

fn params_for(alpha: f64, tol: f64) -> Result<model::ModelParams, CliError> {
    check_alpha(alpha)?;
    model::derive_params(alpha, tol).map_err(run_err)
}

fn csv_out(hash: &str, header: &str, rows: &str) -> String {
    format!("# config_hash={hash}\n{header}\n{rows}")
}

fn json_out(config: &RunConfig, results: serde_json::Value) -> String {
    let doc = json!({
        "config_hash": config.hash(),
        "config": config,
        "results": results,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

pub fn execute(config: &RunConfig) -> Result<String, CliError> {
    match config {
        RunConfig::Thresholds(c) => thresholds_cmd(config, c),
        RunConfig::Ratefn(c) => ratefn_cmd(config, c),
        RunConfig::Exact(c) => exact_cmd(config, c),
        RunConfig::Mc(c) => mc_cmd(config, c),
        RunConfig::Zrp(c) => zrp_cmd(config, c),
    }
}

fn thresholds_cmd(config: &RunConfig, c: &ThresholdsConfig) -> Result<String, CliError> {
    let p = params_for(c.alpha, c.series_tol)?;
    let th = ratefn::thresholds(&p);
    let s2 = ratefn::s2(&p).map_err(run_err)?;
    if !(th.s0 < th.s1 && th.s1 < s2) {
        return Err(CliError::Run(format!(
            "threshold ordering violated: s0={} s1={} s2={s2}",
            th.s0, th.s1
        )));
    }
    match c.format {
        Format::Csv => Ok(csv_out(
            &config.hash(),
            "alpha,c,mu,sigma2,gamma,y_star,s0,s1,s2",
            &format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.alpha, p.c, p.mu, p.sigma2, p.gamma, th.y_star, th.s0, th.s1, s2
            ),
        )),
        Format::Json => Ok(json_out(
            config,
            json!({
                "params": p,
                "y_star": th.y_star,
                "s0": th.s0,
                "s1": th.s1,
                "s2": s2,
            }),
        )),
    }
}

fn ratefn_cmd(config: &RunConfig, c: &RatefnConfig) -> Result<String, CliError> {
    let p = params_for(c.alpha, 1e-12)?;
    if !c.s.is_finite() || c.s <= 0.0 {
        return Err(usage(format!("s must be positive, got {}", c.s)));
    }
    let step = c.grid_step.unwrap_or_else(|| ratefn::default_grid_step(&p));
    let y_max = c.y_max.unwrap_or(c.s).max(c.s);
    let table = ratefn::f_table(&p, c.s, y_max, step, c.tol).map_err(|e| match e {
        ratefn::RatefnError::GridSpec(_) | ratefn::RatefnError::GridTooCoarse { .. } => {
            usage(e.to_string())
        }
        other => run_err(other),
    })?;
    let gaps = ratefn::gap_set(&p, c.s);
    let si = table.s_grid.len() - 1;
    match c.format {
        Format::Csv => {
            let mut rows = String::new();
            for (yi, &y) in table.y_grid.iter().enumerate() {
                let in_gap = gaps.iter().any(|&(a, b)| y > a && y < b);
                rows.push_str(&format!(
                    "{},{},{},{}\n",
                    y,
                    table.value(si, yi),
                    table.g_at(si, yi),
                    in_gap
                ));
            }
            Ok(csv_out(&config.hash(), "y,f,g,gap_flag", &rows))
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = table
                .y_grid
                .iter()
                .enumerate()
                .map(|(yi, &y)| {
                    json!({
                        "y": y,
                        "f": table.value(si, yi),
                        "g": table.g_at(si, yi),
                        "gap": gaps.iter().any(|&(a, b)| y > a && y < b),
                    })
                })
                .collect();
            Ok(json_out(
                config,
                json!({
                    "landscape": ratefn::landscape(&p, c.s),
                    "gap_set": gaps,
                    "iterations": table.iterations,
                    "grid_step": table.grid_step,
                    "rows": rows,
                }),
            ))
        }
    }
}

fn exact_cmd(config: &RunConfig, c: &ExactConfig) -> Result<String, CliError> {
    let p = params_for(c.alpha, 1e-12)?;
    match c.op {
        ExactOp::SlopeSum => {
            if c.oracle {
                return Err(usage("--oracle applies to max-cdf runs only"));
            }
            let report = exactlaw::ldp_slope_sum(&p, c.s, &c.n).map_err(run_err)?;
            slope_output(config, c, &report)
        }
        ExactOp::SlopeMax => {
            if c.oracle {
                return Err(usage("--oracle applies to max-cdf runs only"));
            }
            let (lo, hi) = match (c.window_lo, c.window_hi) {
                (Some(lo), Some(hi)) => (lo, hi),
                _ => return Err(usage("slope-max needs --window-lo and --window-hi")),
            };
            let report = exactlaw::ldp_slope_max(&p, c.s, (lo, hi), &c.n).map_err(run_err)?;
            slope_output(config, c, &report)
        }
        ExactOp::MaxCdf => {
            let grid = c
                .m_grid
                .as_ref()
                .ok_or_else(|| usage("max-cdf needs --m-grid"))?;
            if c.n.len() != 1 {
                return Err(usage("max-cdf takes exactly one --n"));
            }
            let n = c.n[0];
            let (n_target, _) = exactlaw::lattice_target(&p, c.s, n);
            let cdf = exactlaw::conditioned_max_cdf(&p, n, n_target, grid).map_err(run_err)?;
            let oracle = if c.oracle {
                let pmf =
                    exactlaw::enumeration::conditioned_max_pmf(&p, n, n_target).map_err(run_err)?;
                let mut acc = 0.0;
                let mut k = 0u64;
                Some(
                    grid.iter()
                        .map(|&m| {
                            while k <= m.min(n_target) {
                                acc += pmf[k as usize];
                                k += 1;
                            }
                            acc
                        })
                        .collect::<Vec<f64>>(),
                )
            } else {
                None
            };
            match c.format {
                Format::Csv => {
                    let header = if c.oracle {
                        "m,cdf,oracle_cdf"
                    } else {
                        "m,cdf"
                    };
                    let mut rows = String::new();
                    for (i, &m) in grid.iter().enumerate() {
                        match &oracle {
                            Some(o) => rows.push_str(&format!("{},{},{}\n", m, cdf[i], o[i])),
                            None => rows.push_str(&format!("{},{}\n", m, cdf[i])),
                        }
                    }
                    Ok(csv_out(&config.hash(), header, &rows))
                }
                Format::Json => Ok(json_out(
                    config,
                    json!({"n": n, "n_target": n_target, "m_grid": grid, "cdf": cdf, "oracle_cdf": oracle}),
                )),
            }
        }
        ExactOp::Residual => {
            if c.oracle {
                return Err(usage("--oracle applies to max-cdf runs only"));
            }
            let kappa = c.kappa.ok_or_else(|| usage("residual needs --kappa"))?;
            let points = exactlaw::normal_residual(&p, c.s, kappa, &c.n).map_err(run_err)?;
            match c.format {
                Format::Csv => {
                    let mut rows = String::new();
                    for pt in &points {
                        rows.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            pt.n,
                            pt.cap,
                            pt.s_n,
                            pt.log_p,
                            pt.gaussian_exponent,
                            pt.residual_ratio,
                            pt.feasible
                        ));
                    }
                    Ok(csv_out(
                        &config.hash(),
                        "n,cap,s_n,log_p,gaussian,residual_ratio,feasible",
                        &rows,
                    ))
                }
                Format::Json => Ok(json_out(config, json!({ "points": points }))),
            }
        }
    }
}

fn slope_output(
    config: &RunConfig,
    c: &ExactConfig,
    report: &exactlaw::SlopeReport,
) -> Result<String, CliError> {
    match c.format {
        Format::Csv => Ok(format!("# config_hash={}\n{}", config.hash(), report.csv())),
        Format::Json => Ok(json_out(config, serde_json::to_value(report).unwrap())),
    }
}

fn mc_cmd(config: &RunConfig, c: &McConfig) -> Result<String, CliError> {
    let p = params_for(c.alpha, 1e-12)?;
    match c.op {
        McOp::Conditioned => {
            let sampler =
                montecarlo::build_sampler(&p, c.n, c.s, c.kappa, c.seed).map_err(run_err)?;
            let (n_target, _) = exactlaw::lattice_target(&p, c.s, c.n);
            let est = montecarlo::estimate_conditioned(
                &sampler,
                c.n,
                n_target,
                c.batches,
                c.batch_size,
                c.threads,
            )
            .map_err(run_err)?;
            let exact = if c.oracle {
                Some(
                    exactlaw::sum_law(&p, c.n, n_target, Some(sampler.cutoff()))
                        .map_err(run_err)?
                        .log_at(n_target),
                )
            } else {
                None
            };
            match c.format {
                Format::Csv => {
                    let header = if c.oracle {
                        "log_probability,standard_error_log,hits,n_samples,seed,exact_log_probability"
                    } else {
                        "log_probability,standard_error_log,hits,n_samples,seed"
                    };
                    let mut row = format!(
                        "{},{},{},{},{}",
                        est.log_probability,
                        est.standard_error_log,
                        est.hit_count,
                        est.n_samples,
                        c.seed
                    );
                    if let Some(x) = exact {
                        row.push_str(&format!(",{x}"));
                    }
                    row.push('\n');
                    Ok(csv_out(&config.hash(), header, &row))
                }
                Format::Json => Ok(json_out(
                    config,
                    json!({
                        "n_target": n_target,
                        "cutoff": sampler.cutoff(),
                        "tilt": sampler.tilt(),
                        "estimate": est,
                        "exact_log_probability": exact,
                    }),
                )),
            }
        }
        McOp::Histogram => {
            if c.oracle {
                return Err(usage("--oracle applies to conditioned runs only"));
            }
            let edges = c
                .bins
                .as_ref()
                .ok_or_else(|| usage("histogram needs --bins (y-edges)"))?;
            let spec = montecarlo::HistogramSpec {
                n: c.n,
                s: c.s,
                kappa: c.kappa,
                y_edges: edges.clone(),
                batches: c.batches,
                batch_size: c.batch_size,
                seed: c.seed,
                threads: c.threads,
            };
            let hist = montecarlo::mc_max_histogram(&p, &spec).map_err(run_err)?;
            match c.format {
                Format::Csv => Ok(format!("# config_hash={}\n{}", config.hash(), hist.csv())),
                Format::Json => Ok(json_out(config, serde_json::to_value(&hist).unwrap())),
            }
        }
    }
}

fn zrp_config(c: &ZrpRunConfig) -> Result<zrp::ZrpConfig, CliError> {
    check_alpha(c.alpha)?;
    let initial = match c.initial {
        InitialArg::UniformSpread => zrp::Initial::UniformSpread,
        InitialArg::AllAtSiteOne => zrp::Initial::AllAtSiteOne,
        InitialArg::Explicit => zrp::Initial::Explicit(
            c.occupations
                .clone()
                .ok_or_else(|| usage("explicit initial needs --occupations"))?,
        ),
    };
    let cfg = zrp::ZrpConfig {
        n_sites: c.sites,
        n_particles: c.particles,
        alpha: c.alpha,
        topology: match c.topology {
            TopologyArg::Complete => zrp::Topology::Complete,
            TopologyArg::Ring => zrp::Topology::Ring,
        },
        seed: c.seed,
        initial,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn occupation_header(n: usize) -> String {
    let sites: Vec<String> = (1..=n).map(|i| format!("site_{i}")).collect();
    format!("jump,time,{}", sites.join(","))
}

fn occupation_row(state: &zrp::ZrpState) -> String {
    let occ: Vec<String> = state.occupations.iter().map(|k| k.to_string()).collect();
    format!("{},{},{}\n", state.jump_count, state.time, occ.join(","))
}

fn zrp_cmd(config: &RunConfig, c: &ZrpRunConfig) -> Result<String, CliError> {
    let cfg = zrp_config(c)?;
    match c.op {
        ZrpOp::Run => {
            let stop = match (c.max_jumps, c.max_time) {
                (Some(j), None) => zrp::StopRule::MaxJumps(j),
                (None, Some(t)) => zrp::StopRule::MaxTime(t),
                _ => return Err(usage("run needs exactly one of --max-jumps / --max-time")),
            };
            let summary = zrp::run(&cfg, stop, c.thin).map_err(run_err)?;
            match c.format {
                Format::Csv => {
                    let mut rows = occupation_row(&zrp::ZrpState {
                        occupations: cfg.initial_occupations(),
                        time: 0.0,
                        jump_count: 0,
                    });
                    for snap in &summary.snapshots {
                        rows.push_str(&occupation_row(snap));
                    }
                    let last_emitted = summary.snapshots.last().map_or(0, |s| s.jump_count);
                    if summary.final_state.jump_count != last_emitted {
                        rows.push_str(&occupation_row(&summary.final_state));
                    }
                    Ok(csv_out(
                        &config.hash(),
                        &occupation_header(cfg.n_sites),
                        &rows,
                    ))
                }
                Format::Json => Ok(json_out(config, serde_json::to_value(&summary).unwrap())),
            }
        }
        ZrpOp::Stationary => {
            let jumps = c.max_jumps.unwrap_or(1_000_000);
            let thin = c.thin.unwrap_or(100);
            let report = zrp::stationary_check(&cfg, jumps, thin, c.batches).map_err(run_err)?;
            match c.format {
                Format::Csv => {
                    let mut rows = format!("overall,{}\n", report.tv);
                    for (i, tv) in report.batch_tv.iter().enumerate() {
                        rows.push_str(&format!("batch_{i},{tv}\n"));
                    }
                    Ok(csv_out(&config.hash(), "segment,tv", &rows))
                }
                Format::Json => Ok(json_out(config, serde_json::to_value(&report).unwrap())),
            }
        }
        ZrpOp::Condensation => {
            let max_time = c.max_time.unwrap_or(1e9);
            let report = zrp::condensation_time(&cfg, &c.thetas, c.replicas, max_time, c.threads)
                .map_err(run_err)?;
            match c.format {
                Format::Csv => {
                    let mut rows = String::new();
                    for (r, hits) in report.hit_times.iter().enumerate() {
                        for (i, h) in hits.iter().enumerate() {
                            match h {
                                Some(t) => rows
                                    .push_str(&format!("{},{},{},false\n", r, report.thetas[i], t)),
                                None => {
                                    rows.push_str(&format!("{},{},,true\n", r, report.thetas[i]))
                                }
                            }
                        }
                    }
                    Ok(csv_out(
                        &config.hash(),
                        "replica,theta,hit_time,censored",
                        &rows,
                    ))
                }
                Format::Json => Ok(json_out(config, serde_json::to_value(&report).unwrap())),
            }
        }
    }
}
