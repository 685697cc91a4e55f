//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use coherent_heat::greens::pastur_solve;
use coherent_heat::harness::{self, emit_outputs, ExperimentConfig, ExperimentKind, RunRecord};
use coherent_heat::rmt_chain::ChainParams;
use coherent_heat::steady_state::{gibbs, stationary_exact};
use coherent_heat::{bath_coupling::rate_matrix, Execution};

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn config(kind: ExperimentKind, text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(kind, text, &[]).expect("acceptance configuration")
}

fn run(kind: ExperimentKind, text: &str) -> RunRecord {
    harness::run(&config(kind, text), None).expect("experiment run")
}

fn summary(r: &RunRecord, key: &str) -> f64 {
    r.summary_value(key)
        .unwrap_or_else(|| panic!("missing summary key {key}"))
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

/// Exact steady state at T₁ = T₂ for random couplings on 40 levels.
fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 1..=5u64 {
        let text = format!(
            "seed = {seed}\nblocks = 2\nblock_dim = 20\nn_surf = 2\ncoupling = \"dissimilar\"\n\
             [bath1]\ntemperature = 1.0\nrecipe = \"random_symmetric\"\nsub_seed = {}\n\
             [bath2]\ntemperature = 1.0\nrecipe = \"random_symmetric\"\nsub_seed = {}\n",
            100 + seed,
            200 + seed
        );
        let c = config(ExperimentKind::Equilibrium, &text);
        let params = c.chain_params(c.blocks);
        let re = harness::realization(&c, &params, &[seed]).expect("realization");
        let e = re.spectrum.energies();
        assert_eq!(e.len(), 40);
        let s = stationary_exact(
            &rate_matrix(&re.x1, 1.0, e).unwrap(),
            &rate_matrix(&re.x2, 1.0, e).unwrap(),
        )
        .expect("stationary state");
        worst = worst.max((s.p() - gibbs(e, 1.0)).amax());
    }
    check(
        worst <= 1e-10,
        format!("equilibrium reduction: max |P_exact - Gibbs| = {worst:.2e} over 5 instances (tol 1e-10)"),
    )
}

fn criterion_2() -> Outcome {
    let equal = run(ExperimentKind::Equilibrium, "coupling = \"equal\"");
    let similar = run(ExperimentKind::Equilibrium, "coupling = \"similar\"\nratio = 3");
    let wrong = run(
        ExperimentKind::Equilibrium,
        "coupling = \"similar\"\nratio = 3\nreference = \"mean\"",
    );
    let (a, b, c) = (
        summary(&equal, "err_exact_vs_gibbs.slope"),
        summary(&similar, "err_exact_vs_gibbs.slope"),
        summary(&wrong, "err_exact_vs_gibbs.slope"),
    );
    check(
        within(a, 2.0, 0.2) && within(b, 2.0, 0.2) && within(c, 1.0, 0.2),
        format!("second-order deviation: slopes equal {a:.3}, similar a=3 {b:.3} (target 2.0 +/- 0.2), similar with mean T0 {c:.3} (target 1.0 +/- 0.2)"),
    )
}

fn criterion_3() -> Outcome {
    let r = run(ExperimentKind::Equilibrium, "coupling = \"dissimilar\"");
    let slope = summary(&r, "err_pert_vs_exact.slope");
    let bracket = summary(&r, "bracket.max_rel");
    check(
        within(slope, 2.0, 0.2) && bracket <= 1e-10,
        format!("perturbative vs exact (dissimilar): slope {slope:.3} (target 2.0 +/- 0.2), bracket at alpha_1 {bracket:.2e} (tol 1e-10)"),
    )
}

/// Criteria 4 and 5 share the linearity sweeps.
fn criteria_4_and_5() -> (Outcome, Outcome) {
    let runs: Vec<(&str, RunRecord)> = ["equal", "similar", "dissimilar"]
        .into_iter()
        .map(|mode| (mode, run(ExperimentKind::Linearity, &format!("coupling = \"{mode}\""))))
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (mode, r) in &runs {
        let s = summary(r, "mismatch.slope");
        ok &= within(s, 1.0, 0.3);
        parts.push(format!("{mode} mismatch slope {s:.3}"));
    }
    let spread = summary(&runs[1].1, "form_spread.max");
    ok &= spread <= 1e-12;
    parts.push(format!("similar forms agree to {spread:.1e} (tol 1e-12)"));

    let dis = &runs[2].1;
    let dts = dis.column("dT").unwrap();
    let devs = dis.column("form_deviation").unwrap();
    let t0 = dis.config.t0;
    let at = dts
        .iter()
        .zip(&devs)
        .filter(|(dt, _)| ((*dt / t0) - 0.02).abs() < 1e-12)
        .map(|(_, d)| *d)
        .fold(0.0, f64::max);
    ok &= at <= 0.05;
    parts.push(format!(
        "dissimilar forms vs exact slope at dT = 0.02 T0: {:.2}% (tol 5%)",
        100.0 * at
    ));
    let c4 = check(
        ok,
        format!("Fourier's law (slope target 1.0 +/- 0.3): {}", parts.join("; ")),
    );

    let flow = runs
        .iter()
        .map(|(_, r)| summary(r, "flow_mismatch.max"))
        .fold(0.0, f64::max);
    let rows: usize = runs.iter().map(|(_, r)| r.rows.len()).sum();
    let c5 = check(
        flow <= 1e-9,
        format!("energy conservation: max bath-flow mismatch {flow:.2e} over {rows} instances (tol 1e-9)"),
    );
    (c4, c5)
}

fn criterion_6() -> Outcome {
    let two = ChainParams {
        blocks: 2,
        lambda: 1.0,
        w: 1.0,
        ..ChainParams::default()
    };
    let g2 = pastur_solve(&two, &[0.0], 1e-10, Execution::Sequential)
        .unwrap()
        .g_blocks()[0]
        .clone();
    let exact = 1.0 / 2f64.sqrt();
    let err2 = g2
        .iter()
        .map(|g| (g.re.powi(2) + (g.im + exact).powi(2)).sqrt())
        .fold(0.0, f64::max);

    let eight = ChainParams { blocks: 8, ..two };
    let g8 = pastur_solve(&eight, &[0.0], 1e-10, Execution::Sequential)
        .unwrap()
        .g_blocks()[0]
        .clone();
    let bulk = 1.0 / 3f64.sqrt();
    let err8 = g8[3..5]
        .iter()
        .map(|g| (g.im.abs() / bulk - 1.0).abs())
        .fold(0.0, f64::max);
    check(
        err2 <= 1e-6 && err8 <= 0.05,
        format!("Pastur: K=2 |G - (-i/sqrt2)| = {err2:.2e} (tol 1e-6); K=8 middle blocks within {:.2}% of -i/sqrt3 (tol 5%)", 100.0 * err8),
    )
}

fn criterion_7() -> Outcome {
    let r = run(ExperimentKind::Spectral, "");
    let l1 = summary(&r, "density.bulk_l1_rel");
    let max = summary(&r, "density.bulk_max_rel");
    let slope = summary(&r, "density0.slope");
    check(
        l1 <= 0.05 && within(slope, 1.0, 0.05),
        format!(
            "spectral MC vs Pastur: bulk mean relative deviation {:.2}% (tol 5%; pointwise max {:.2}%), rho(0) vs K slope {slope:.3} (target 1.00 +/- 0.05)",
            100.0 * l1,
            100.0 * max
        ),
    )
}

fn criterion_8() -> Outcome {
    let r = run(ExperimentKind::Strength, "");
    let spread = summary(&r, "width_mc.spread");
    let dev = summary(&r, "mc_vs_analytic.max_rel");
    let widths: Vec<String> = r
        .column("width_mc")
        .unwrap()
        .iter()
        .map(|w| format!("{w:.4}"))
        .collect();
    check(
        spread <= 0.10 && dev <= 0.15,
        format!(
            "strength-function widths K=2,4,8: MC [{}], spread {:.2}% (tol 10%), max deviation from analytic {:.2}% (tol 15%)",
            widths.join(", "),
            100.0 * spread,
            100.0 * dev
        ),
    )
}

fn criterion_9() -> Outcome {
    let r = run(ExperimentKind::Scaling, "");
    let (c, n, z) = (
        summary(&r, "C.slope"),
        summary(&r, "numerator.slope"),
        summary(&r, "Z.slope"),
    );
    check(
        within(c, -1.0, 0.15) && within(n, 0.0, 0.15) && within(z, 1.0, 0.1),
        format!("headline scaling: C slope {c:.3} (target -1.0 +/- 0.15), numerator slope {n:.3} (0.0 +/- 0.15), Z slope {z:.3} (1.0 +/- 0.1)"),
    )
}

fn criterion_10() -> Outcome {
    let cases = [
        (ExperimentKind::Scaling, "realizations = 10\nblock_dim = 40"),
        (ExperimentKind::Equilibrium, "coupling = \"dissimilar\""),
        (ExperimentKind::Spectral, "realizations = 10\nblock_dim = 50"),
    ];
    let mut identical = true;
    for (kind, text) in cases {
        let c = config(kind, text);
        let tables: Vec<Vec<u8>> = [Execution::Parallel, Execution::Parallel, Execution::Sequential]
            .into_iter()
            .map(|exec| {
                let dir = tempfile::tempdir().unwrap();
                let record = harness::run(&c, Some(exec)).unwrap();
                let paths = emit_outputs(&record, dir.path()).unwrap();
                std::fs::read(paths.table).unwrap()
            })
            .collect();
        identical &= tables.windows(2).all(|w| w[0] == w[1]);
    }
    check(
        identical,
        "determinism: scaling, equilibrium and spectral tables byte-identical across repeated and sequential runs"
            .into(),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, outcome: Outcome, started: Instant| {
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} [{n}] {} ({:.1}s)",
            outcome.detail,
            started.elapsed().as_secs_f64()
        );
        if !outcome.passed {
            failures += 1;
        }
    };
    let t = Instant::now();
    report(1, criterion_1(), t);
    let t = Instant::now();
    report(2, criterion_2(), t);
    let t = Instant::now();
    report(3, criterion_3(), t);
    let t = Instant::now();
    let (c4, c5) = criteria_4_and_5();
    report(4, c4, t);
    report(5, c5, t);
    let t = Instant::now();
    report(6, criterion_6(), t);
    let t = Instant::now();
    report(7, criterion_7(), t);
    let t = Instant::now();
    report(8, criterion_8(), t);
    let t = Instant::now();
    report(9, criterion_9(), t);
    let t = Instant::now();
    report(10, criterion_10(), t);
    if failures == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criterion line(s) failed");
        ExitCode::FAILURE
    }
}
