//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`) and enforcing its stated
//! tolerance and runtime budget.
//!
//! Criteria 5 and 6 are asserted exactly as stated even though the desk-scale
//! numbers cannot meet them (see the FAIL messages for the quantitative
//! reason); the neighbouring checks that do hold are asserted alongside.

use std::time::Instant;

use condensate_ldp::exactlaw::{self, lattice_target};
use condensate_ldp::model::{derive_params, ModelParams};
use condensate_ldp::montecarlo;
use condensate_ldp::ratefn;
use condensate_ldp::rng::SplitMix64;
use condensate_ldp::zrp;

fn params(alpha: f64) -> ModelParams {
    derive_params(alpha, 1e-12).unwrap()
}

fn finish(name: &str, started: Instant, budget_s: f64, failures: Vec<String>) {
    let elapsed = started.elapsed().as_secs_f64();
    let mut failures = failures;
    if elapsed > budget_s {
        failures.push(format!("runtime {elapsed:.1}s exceeds budget {budget_s}s"));
    }
    if failures.is_empty() {
        println!("[{name}] PASS ({elapsed:.2}s)");
    } else {
        println!("[{name}] FAIL ({elapsed:.2}s)");
        for f in &failures {
            println!("  - {f}");
        }
        panic!("{name}: {}", failures.join(" | "));
    }
}

#[test]
fn criterion_01_threshold_identities() {
    let started = Instant::now();
    let mut failures = Vec::new();
    for alpha in [0.3, 0.5, 0.7] {
        let p = params(alpha);
        let th = ratefn::thresholds(&p);
        let checks = [
            (
                "g''(y_*) = 0",
                ratefn::g_second(&p, th.s0, th.y_star).unwrap(),
            ),
            (
                "g'_{s0}(y_*) = 0",
                ratefn::g_prime(&p, th.s0, th.y_star).unwrap(),
            ),
            ("y2(s1) = (2-2a)*gamma*s1", {
                let (_, y2) = ratefn::critical_points(&p, th.s1).unwrap();
                y2 - (2.0 - 2.0 * alpha) * p.gamma * th.s1
            }),
            ("g_{s1}(y2) = g_{s1}(0)", {
                let (_, y2) = ratefn::critical_points(&p, th.s1).unwrap();
                ratefn::g(&p, th.s1, y2).unwrap() - ratefn::g(&p, th.s1, 0.0).unwrap()
            }),
        ];
        for (label, residual) in checks {
            if residual.abs() > 1e-8 {
                failures.push(format!("alpha={alpha}: {label} off by {residual:.3e}"));
            }
        }
    }
    finish("criterion 01: threshold identities", started, 1.0, failures);
}

#[test]
fn criterion_02_threshold_ordering() {
    let started = Instant::now();
    let mut failures = Vec::new();
    for alpha in [0.3, 0.5, 0.7] {
        let p = params(alpha);
        let th = ratefn::thresholds(&p);
        match ratefn::s2(&p) {
            Ok(s2) => {
                if !(th.s0 < th.s1 && th.s1 < s2 && s2.is_finite()) {
                    failures.push(format!(
                        "alpha={alpha}: ordering broken: s0={} s1={} s2={s2}",
                        th.s0, th.s1
                    ));
                }
            }
            Err(e) => failures.push(format!("alpha={alpha}: s2 failed: {e}")),
        }
    }
    finish("criterion 02: s0 < s1 < s2 < inf", started, 10.0, failures);
}

#[test]
fn criterion_03_rate_function_agreement_and_gap() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let p = params(0.5);
    let th = ratefn::thresholds(&p);
    let s2v = ratefn::s2(&p).unwrap();
    let step = 0.02;

    for s in [0.5 * th.s1, th.s1, 0.5 * (th.s1 + s2v)] {
        let table = ratefn::f_table(&p, s, s, step, 1e-9).unwrap();
        let si = table.s_grid.len() - 1;
        let sup = (0..table.y_grid.len())
            .map(|yi| (table.value(si, yi) - table.g_at(si, yi)).abs())
            .fold(0.0f64, f64::max);
        if sup > 5.0 * table.grid_step {
            failures.push(format!(
                "s={s:.4}: sup|f-g| = {sup:.3e} above 5*step = {:.3e}",
                5.0 * table.grid_step
            ));
        }
    }

    let s = 1.5 * s2v;
    let table = ratefn::f_table(&p, s, s, step, 1e-9).unwrap();
    let si = table.s_grid.len() - 1;
    let gaps = ratefn::gap_set(&p, s);
    if gaps.is_empty() {
        failures.push(format!("s={s:.4}: gap set empty above s2"));
    }
    let y0s = ratefn::y0(&p, s).unwrap();
    for &(a, b) in &gaps {
        if !(a >= y0s - 1e-6 && b <= s - th.s1 + 1e-6) {
            failures.push(format!(
                "J interval ({a:.4},{b:.4}) escapes (y0={y0s:.4}, s-s1={:.4})",
                s - th.s1
            ));
        }
    }
    let h = table.grid_step;
    let mut strict_nodes = 0;
    for (yi, &y) in table.y_grid.iter().enumerate() {
        let inside = gaps
            .iter()
            .any(|&(a, b)| y > a + 2.0 * h && y < b - 2.0 * h);
        if inside {
            strict_nodes += 1;
            if table.value(si, yi) >= table.g_at(si, yi) {
                failures.push(format!("no strict gap at grid node y={y:.4}"));
            }
        }
    }
    if strict_nodes == 0 {
        failures.push("gap interior contained no grid nodes".into());
    }
    finish(
        "criterion 03: f = g below s2, gap above",
        started,
        60.0,
        failures,
    );
}

#[test]
fn criterion_04_brute_force_equivalence() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let p = params(0.5);
    let rel = |a: f64, b: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
        }
    };
    for n in 1..=4u64 {
        let law = exactlaw::sum_law(&p, n, 12, None).unwrap();
        let brute = exactlaw::enumeration::sum_pmf(&p, n, 12, None).unwrap();
        for target in 0..=12u64 {
            let d = rel(law.log_at(target).exp(), brute[target as usize]);
            if d > 1e-12 {
                failures.push(format!("P(S_{n}={target}) off by {d:.2e}"));
            }
        }
        for cap in 0..=12u64 {
            let capped = exactlaw::sum_law(&p, n, 12, Some(cap)).unwrap();
            let brute = exactlaw::enumeration::sum_pmf(&p, n, 12, Some(cap)).unwrap();
            for target in 0..=12u64 {
                let d = rel(capped.log_at(target).exp(), brute[target as usize]);
                if d > 1e-12 {
                    failures.push(format!("P(S_{n}={target}, M<={cap}) off by {d:.2e}"));
                }
            }
        }
        if n >= 2 {
            for target in 1..=12u64 {
                for a in 1..=target {
                    for b in 0..a {
                        let ours = exactlaw::top_two_joint(&p, n, target, a, b).unwrap().exp();
                        let brute = exactlaw::enumeration::top_two(&p, n, target, a, b).unwrap();
                        let d = rel(ours, brute);
                        if d > 1e-12 {
                            failures.push(format!(
                                "top-two (n={n},N={target},a={a},b={b}) off by {d:.2e}"
                            ));
                        }
                    }
                }
            }
        }
    }
    failures.truncate(5);
    finish(
        "criterion 04: brute-force equivalence",
        started,
        30.0,
        failures,
    );
}

#[test]
fn criterion_05_sum_slope_trend() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let p = params(0.5);
    let th = ratefn::thresholds(&p);
    let n_list = [64u64, 128, 256, 512];
    for (label, s) in [("0.5*s1", 0.5 * th.s1), ("2*s1", 2.0 * th.s1)] {
        let report = exactlaw::ldp_slope_sum(&p, s, &n_list).unwrap();
        let pred = report.limit_prediction;
        let gap_first = (report.slopes[0] - pred).abs();
        let gap_last = (report.slopes[3] - pred).abs();
        let rel_last = gap_last / pred.abs();
        println!(
            "  s={label}: slopes={:?} prediction={pred:.6} rel@512={:.1}%",
            report.slopes,
            100.0 * rel_last
        );
        if gap_last >= gap_first {
            failures.push(format!(
                "s={label}: |slope-inf_F| did not shrink: {gap_first:.4} -> {gap_last:.4}"
            ));
        }
        if rel_last > 0.30 {
            failures.push(format!(
                "s={label}: slope at n=512 is {:.1}% from inf_F (band 30%); the gap decays \
                 like n^(gamma-1)*(log-prefactor + cubic correction) and first meets 30% \
                 only near n = 2048",
                100.0 * rel_last
            ));
        }
    }
    finish("criterion 05: sum-slope trend", started, 600.0, failures);
}

#[test]
fn criterion_06_normal_approximation_residual() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let p = params(0.5);
    let n_list = [64u64, 128, 256, 512];
    let points = exactlaw::normal_residual(&p, 1.0, 0.3, &n_list).unwrap();
    for pt in &points {
        println!(
            "  kappa=0.3 n={}: cap={} log_p={:.4} residual={:.4} feasible={}",
            pt.n, pt.cap, pt.log_p, pt.residual_ratio, pt.feasible
        );
        if !pt.feasible {
            failures.push(format!(
                "n={}: event empty (cap {} x {} sites = {} < target {}); the truncation \
                 premises are asymptotic and kappa=0.3 starves the cap at this size",
                pt.n,
                pt.cap,
                pt.n,
                pt.cap * pt.n,
                lattice_target(&p, 1.0, pt.n).0
            ));
        }
    }
    if points.iter().all(|pt| pt.feasible) {
        let r64 = points[0].residual_ratio;
        let max = points
            .iter()
            .map(|pt| pt.residual_ratio)
            .fold(0.0f64, f64::max);
        if max > 3.0 * r64 {
            failures.push(format!(
                "max residual {max:.3} above 3x n=64 value {r64:.3}"
            ));
        }
    }
    // supplementary (non-gating): the nearest feasible cap shows the bound
    let feasible = exactlaw::normal_residual(&p, 1.0, 0.5, &n_list).unwrap();
    let r64 = feasible[0].residual_ratio;
    let max = feasible
        .iter()
        .map(|pt| pt.residual_ratio)
        .fold(0.0f64, f64::max);
    println!(
        "  supplementary kappa=0.5: residuals={:?} max<=3x(n=64): {}",
        feasible
            .iter()
            .map(|pt| (pt.residual_ratio * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        max <= 3.0 * r64
    );
    finish(
        "criterion 06: normal-approximation residual",
        started,
        600.0,
        failures,
    );
}

#[test]
fn criterion_07_conditioned_max_window_trend() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let p = params(0.5);
    let th = ratefn::thresholds(&p);
    let s = 2.0 * th.s1;
    let l = ratefn::landscape(&p, s);
    let y2 = l.y2.unwrap();
    let report =
        exactlaw::ldp_slope_max(&p, s, (0.9 * y2, 1.1 * y2), &[64, 128, 256, 512]).unwrap();
    println!(
        "  window=({:.3},{:.3}) prediction={:.2e} slopes={:?}",
        0.9 * y2,
        1.1 * y2,
        report.limit_prediction,
        report.slopes
    );
    if report.limit_prediction.abs() > 1e-9 {
        failures.push(format!(
            "window around the argmin should predict 0, got {}",
            report.limit_prediction
        ));
    }
    if report.slopes[3] > 0.5 * report.slopes[0] {
        failures.push(format!(
            "slope at n=512 ({:.4}) not half of n=64 ({:.4})",
            report.slopes[3], report.slopes[0]
        ));
    }
    finish(
        "criterion 07: conditioned-max window trend",
        started,
        600.0,
        failures,
    );
}

#[test]
fn criterion_08_mc_vs_exact() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let p = params(0.5);
    let (n, s, kappa, seed) = (64u64, 1.0, 0.5, 42u64);
    let (n_target, _) = lattice_target(&p, s, n);
    let sampler = montecarlo::build_sampler(&p, n, s, kappa, seed).unwrap();
    let est = montecarlo::estimate_conditioned(&sampler, n, n_target, 10, 4000, 2).unwrap();
    let exact = exactlaw::sum_law(&p, n, n_target, Some(sampler.cutoff()))
        .unwrap()
        .log_at(n_target);
    println!(
        "  mc={:.5} exact={exact:.5} se={:.5} hits={}",
        est.log_probability, est.standard_error_log, est.hit_count
    );
    if est.hit_count < 100 {
        failures.push(format!("only {} hits (need >= 100)", est.hit_count));
    }
    let dev = (est.log_probability - exact).abs();
    if dev > 3.0 * est.standard_error_log {
        failures.push(format!(
            "deviation {dev:.4} above 3 combined SE = {:.4}",
            3.0 * est.standard_error_log
        ));
    }
    finish("criterion 08: MC vs exact", started, 120.0, failures);
}

#[test]
fn criterion_09_zrp_stationarity() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let cfg = zrp::ZrpConfig {
        n_sites: 3,
        n_particles: 6,
        alpha: 0.5,
        topology: zrp::Topology::Complete,
        seed: 20240527,
        initial: zrp::Initial::UniformSpread,
    };
    let report = zrp::stationary_check(&cfg, 1_000_000, 100, 10).unwrap();
    println!("  TV = {:.5} over {} states", report.tv, report.states);
    if report.tv > 0.02 {
        failures.push(format!("TV {} above 0.02 after 1e6 jumps", report.tv));
    }

    // detailed balance on 100 random transitions, exact to 1e-12 relative
    let mut rng = SplitMix64::new(99);
    let alpha = cfg.alpha;
    let pi = |occ: &[u64]| (-occ.iter().map(|&k| (k as f64).powf(alpha)).sum::<f64>()).exp();
    let mut checked = 0;
    while checked < 100 {
        let n = 2 + rng.next_below(3) as usize;
        let occ: Vec<u64> = (0..n).map(|_| rng.next_below(6)).collect();
        let x = rng.next_below(n as u64) as usize;
        if occ[x] == 0 {
            continue;
        }
        let y = (x + 1 + rng.next_below(n as u64 - 1) as usize) % n;
        if y == x {
            continue;
        }
        let mut moved = occ.clone();
        moved[x] -= 1;
        moved[y] += 1;
        let lhs = pi(&occ) * zrp::jump_rate(alpha, occ[x]);
        let rhs = pi(&moved) * zrp::jump_rate(alpha, moved[y]);
        if ((lhs - rhs) / rhs).abs() > 1e-12 {
            failures.push(format!(
                "detailed balance off at {occ:?} {x}->{y}: {lhs} vs {rhs}"
            ));
        }
        checked += 1;
    }
    finish("criterion 09: ZRP stationarity", started, 120.0, failures);
}

#[test]
fn criterion_10_byte_identical_reruns() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_condensate-ldp");
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("thresholds", vec!["thresholds", "--alpha", "0.5"]),
        (
            "ratefn",
            vec![
                "ratefn",
                "--alpha",
                "0.7",
                "--s",
                "6.0",
                "--grid-step",
                "0.05",
            ],
        ),
        (
            "exact",
            vec![
                "exact",
                "--alpha",
                "0.5",
                "--s",
                "1.0",
                "--op",
                "slope-sum",
                "--n",
                "8,16",
            ],
        ),
        (
            "mc",
            vec![
                "mc",
                "--alpha",
                "0.5",
                "--s",
                "1.0",
                "--n",
                "32",
                "--kappa",
                "0.5",
                "--op",
                "conditioned",
                "--seed",
                "7",
                "--batches",
                "4",
                "--batch-size",
                "500",
            ],
        ),
        (
            "zrp-stationary",
            vec![
                "zrp",
                "--alpha",
                "0.5",
                "--sites",
                "3",
                "--particles",
                "6",
                "--op",
                "stationary",
                "--seed",
                "3",
                "--max-jumps",
                "50000",
            ],
        ),
        (
            "zrp-condensation",
            vec![
                "zrp",
                "--alpha",
                "0.5",
                "--sites",
                "4",
                "--particles",
                "40",
                "--op",
                "condensation",
                "--seed",
                "5",
                "--replicas",
                "4",
                "--max-time",
                "1e6",
                "--threads",
                "2",
            ],
        ),
    ];
    for (name, args) in &runs {
        let out_a = dir.path().join(format!("{name}-a.csv"));
        let out_b = dir.path().join(format!("{name}-b.csv"));
        for out in [&out_a, &out_b] {
            let status = std::process::Command::new(bin)
                .args(args)
                .arg("--out")
                .arg(out)
                .status()
                .unwrap();
            if !status.success() {
                failures.push(format!("{name}: run failed"));
            }
        }
        let (a, b) = (
            std::fs::read(&out_a).unwrap_or_default(),
            std::fs::read(&out_b).unwrap_or_default(),
        );
        if a != b || a.is_empty() {
            failures.push(format!("{name}: reruns differ"));
        }
        // reproduction from the emitted manifest
        let manifest = dir.path().join(format!("{name}-a.config.json"));
        let out_c = dir.path().join(format!("{name}-c.csv"));
        let status = std::process::Command::new(bin)
            .arg(args[0])
            .args(minimal_required(args[0]))
            .arg("--config")
            .arg(&manifest)
            .arg("--out")
            .arg(&out_c)
            .status()
            .unwrap();
        if !status.success() {
            failures.push(format!("{name}: config rerun failed"));
        } else if std::fs::read(&out_c).unwrap_or_default() != a {
            failures.push(format!("{name}: config rerun differs"));
        }
    }
    finish("criterion 10: determinism", started, 120.0, failures);
}

/// Placeholder flag sets so clap accepts the invocation before --config
/// replaces everything.
fn minimal_required(sub: &str) -> Vec<&'static str> {
    match sub {
        "thresholds" => vec!["--alpha", "0.4"],
        "ratefn" => vec!["--alpha", "0.4", "--s", "1.0"],
        "exact" => vec![
            "--alpha",
            "0.4",
            "--s",
            "1.0",
            "--op",
            "slope-sum",
            "--n",
            "8",
        ],
        "mc" => vec![
            "--alpha",
            "0.4",
            "--s",
            "1.0",
            "--n",
            "8",
            "--kappa",
            "0.5",
            "--op",
            "conditioned",
        ],
        "zrp" => vec![
            "--alpha",
            "0.4",
            "--sites",
            "2",
            "--particles",
            "2",
            "--op",
            "run",
            "--max-jumps",
            "1",
        ],
        _ => vec![],
    }
}
