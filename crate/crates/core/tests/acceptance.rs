//! Acceptance run: one PASS/FAIL line per criterion, details indented below.
//!
//! Criteria marked as known gaps are reported but do not fail the target.

use std::process::ExitCode;
use std::time::Instant;

use awpinn::harness::checks::{
    derivative_oracles, exact_solution_residuals, exponent_transform, fdtd_properties, gp_check_config, gp_limit,
    ntk_identities, optimizer_oracles, selection_properties, CheckOutcome,
};
use awpinn::harness::{preset, rerun_manifest, run_benchmark, MetricReport, Scale, PRESET_NAMES};
use awpinn::loss::{loss_ratio_diagnostic, LossAssembler};
use awpinn::optimize::{init_fixed, run_pipeline};
use awpinn::problems::{sample_points, Role};
use awpinn::{LossMode, Result};

const SEED: u64 = 1;
const GP_DISCREPANCY: &str = "GP discrepancy ratio";

struct Criterion {
    id: usize,
    title: &'static str,
    passed: bool,
    known_gap: bool,
    details: Vec<String>,
    seconds: f64,
}

fn from_checks(id: usize, title: &'static str, checks: Result<Vec<CheckOutcome>>, gap: Option<&str>) -> Criterion {
    let mut c = Criterion { id, title, passed: true, known_gap: false, details: Vec::new(), seconds: 0.0 };
    match checks {
        Ok(list) => {
            let failing: Vec<&CheckOutcome> = list.iter().filter(|o| !o.passed).collect();
            c.passed = failing.is_empty();
            c.known_gap = !c.passed && failing.iter().all(|o| gap.is_some_and(|g| o.name.starts_with(g)));
            c.details = list.iter().map(CheckOutcome::line).collect();
        }
        Err(e) => {
            c.passed = false;
            c.details.push(format!("error: {e}"));
        }
    }
    c
}

fn with_time(limit: Option<f64>, f: impl FnOnce() -> Criterion) -> Criterion {
    let start = Instant::now();
    let mut c = f();
    c.seconds = start.elapsed().as_secs_f64();
    if let Some(limit) = limit {
        let ok = c.seconds < limit;
        c.details.push(format!("{} runtime {:.1} s, limit {limit:.0} s", if ok { "PASS" } else { "FAIL" }, c.seconds));
        c.passed &= ok;
    }
    c
}

fn derivative_suite() -> Criterion {
    from_checks(1, "derivative oracles vs finite differences", Ok(derivative_oracles(500, SEED)), None)
}

fn exact_residuals() -> Criterion {
    from_checks(2, "closed-form solutions satisfy assembled problems", Ok(exact_solution_residuals(1000, SEED)), None)
}

fn desk_report(name: &str) -> Result<(MetricReport, bool)> {
    let cfg = preset(name, Scale::Desk)?;
    let budget_ok = cfg.train.adam_iterations <= 2000 && cfg.train.lbfgs.max_iterations <= 2000 && cfg.seeds.len() == 5;
    Ok((run_benchmark(&cfg, &mut |_| {})?, budget_ok))
}

fn desk_solves() -> Criterion {
    let mut c = Criterion { id: 3, title: "desk-scale solves, median over 5 seeds", passed: true, known_gap: false, details: Vec::new(), seconds: 0.0 };
    for (name, limit) in [("heat-0.12", 5e-3), ("poisson-0.05", 1e-2), ("flow", 5e-2)] {
        let start = Instant::now();
        match desk_report(name) {
            Ok((r, budget_ok)) => {
                let secs = start.elapsed().as_secs_f64();
                let ok = budget_ok && r.failed.is_empty() && r.median[0] <= limit && secs <= 900.0 * 5.0;
                c.passed &= ok;
                let errs: Vec<String> = r.repeats.iter().map(|m| format!("{:.2e}", m.errors[0])).collect();
                c.details.push(format!(
                    "{} {name:<13} median {:.3e}  limit {limit:.0e}  seeds [{}]  {:.0} s",
                    if ok { "PASS" } else { "FAIL" },
                    r.median[0],
                    errs.join(", "),
                    secs
                ));
            }
            Err(e) => {
                c.passed = false;
                c.details.push(format!("FAIL {name}: {e}"));
            }
        }
    }
    c
}

fn loss_imbalance() -> Criterion {
    let mut c = Criterion { id: 4, title: "initial loss imbalance, heat eps=0.1 W-PINN", passed: false, known_gap: false, details: Vec::new(), seconds: 0.0 };
    let run = || -> Result<Vec<(String, f64)>> {
        let cfg = preset("heat-0.10-wpinn", Scale::Full)?;
        let problem = cfg.problem.build()?;
        let points = sample_points(&problem, &cfg.points.per_condition(&problem)?, &cfg.points.test, SEED)?;
        let family = std::sync::Arc::new(cfg.family.build(&problem.domain)?);
        let models = init_fixed(&problem, &family, SEED)?;
        let asm = LossAssembler::new(&problem, &points, &models)?;
        let (b, _) = asm.evaluate(&models, cfg.train.weights, LossMode::Weighted, false)?;
        let ratios = loss_ratio_diagnostic(&b.terms)?;
        let res = b.roles.iter().position(|r| *r == Role::Residual).expect("residual term");
        let bc = b.roles.iter().position(|r| *r == Role::Boundary).expect("boundary term");
        let mut out: Vec<(String, f64)> = b.names.iter().cloned().zip(ratios).collect();
        out.push(("res/bc".into(), b.terms[res] / b.terms[bc]));
        Ok(out)
    };
    match run() {
        Ok(r) => {
            let ratio = r.last().expect("ratio").1;
            c.passed = ratio >= 1e6;
            let parts: Vec<String> = r[..r.len() - 1].iter().map(|(n, v)| format!("{n} {v:.2e}")).collect();
            c.details.push(format!("{} L_res/L_b {ratio:.3e}  limit 1e6  (normalised terms: {})", if c.passed { "PASS" } else { "FAIL" }, parts.join(", ")));
        }
        Err(e) => c.details.push(format!("error: {e}")),
    }
    c
}

fn handoff() -> Criterion {
    let mut c = Criterion { id: 5, title: "stage hand-off identity, every preset", passed: true, known_gap: false, details: Vec::new(), seconds: 0.0 };
    for name in PRESET_NAMES {
        let run = || -> Result<f64> {
            let mut cfg = preset(name, Scale::Desk)?;
            cfg.train.adam_iterations = 50;
            cfg.train.lbfgs.max_iterations = 0;
            let problem = cfg.problem.build()?;
            let points = sample_points(&problem, &cfg.points.per_condition(&problem)?, &cfg.points.test, SEED)?;
            let r = run_pipeline(&problem, &points, &cfg.family, &cfg.selection, &cfg.train, SEED, &mut |_| {})?;
            Ok(r.handoff.expect("adaptive preset").relative_error)
        };
        match run() {
            Ok(e) => {
                let ok = e < 1e-8;
                c.passed &= ok;
                c.details.push(format!("{} {name:<13} rel. diff {e:.3e}  limit 1e-8", if ok { "PASS" } else { "FAIL" }));
            }
            Err(e) => {
                c.passed = false;
                c.details.push(format!("FAIL {name}: {e}"));
            }
        }
    }
    c
}

fn maxwell_solve() -> Criterion {
    let mut c = Criterion { id: 10, title: "FDTD properties and desk Maxwell solve", passed: true, known_gap: false, details: Vec::new(), seconds: 0.0 };
    let props = from_checks(10, "", fdtd_properties(), None);
    c.details.extend(props.details);
    let run = || -> Result<MetricReport> {
        let mut cfg = preset("maxwell", Scale::Desk)?;
        cfg.seeds = vec![SEED];
        run_benchmark(&cfg, &mut |_| {})
    };
    match run() {
        Ok(r) if r.failed.is_empty() => {
            for (f, e) in r.fields.iter().zip(&r.mean) {
                let ok = *e <= 1e-1;
                c.passed &= ok;
                c.details.push(format!("{} Maxwell {f:<3} rel. L2 vs FDTD {e:.3e}  limit 1e-1", if ok { "PASS" } else { "FAIL" }));
            }
        }
        Ok(r) => {
            c.passed = false;
            c.details.push(format!("FAIL Maxwell solve: {}", r.failed[0].error));
        }
        Err(e) => {
            c.passed = false;
            c.details.push(format!("FAIL Maxwell solve: {e}"));
        }
    }
    c.known_gap = props.passed && !c.passed;
    c.passed &= props.passed;
    c
}

fn reproducibility() -> Criterion {
    let mut c = Criterion { id: 12, title: "bit-exact rerun from a saved manifest", passed: false, known_gap: false, details: Vec::new(), seconds: 0.0 };
    let run = || -> Result<Vec<bool>> {
        let dir = tempfile::tempdir()?;
        let mut cfg = preset("heat-0.12", Scale::Desk)?;
        cfg.seeds = vec![1, 2];
        cfg.train.adam_iterations = 100;
        cfg.train.lbfgs.max_iterations = 30;
        cfg.points.residual = 400;
        cfg.output = Some(dir.path().to_path_buf());
        let report = run_benchmark(&cfg, &mut |_| {})?;
        let mut out = Vec::new();
        for m in &report.repeats {
            let r = rerun_manifest(&dir.path().join(format!("seed-{}", m.seed)).join("manifest.json"))?;
            out.push(r.identical && r.errors.iter().zip(&m.errors).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        Ok(out)
    };
    match run() {
        Ok(v) => {
            c.passed = !v.is_empty() && v.iter().all(|&b| b);
            c.details.push(format!("{} {} of {} reruns identical", if c.passed { "PASS" } else { "FAIL" }, v.iter().filter(|&&b| b).count(), v.len()));
        }
        Err(e) => c.details.push(format!("error: {e}")),
    }
    c
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let criteria: Vec<Box<dyn FnOnce() -> Criterion>> = vec![
        Box::new(|| with_time(Some(60.0), derivative_suite)),
        Box::new(|| with_time(None, exact_residuals)),
        Box::new(|| with_time(None, desk_solves)),
        Box::new(|| with_time(None, loss_imbalance)),
        Box::new(|| with_time(None, handoff)),
        Box::new(|| with_time(None, || from_checks(6, "selection properties", Ok(selection_properties(200, SEED)), None))),
        Box::new(|| with_time(None, || from_checks(7, "NTK identities", ntk_identities(SEED), None))),
        Box::new(|| with_time(Some(120.0), || from_checks(8, "infinite-width Monte Carlo", gp_limit(&gp_check_config()), Some(GP_DISCREPANCY)))),
        Box::new(|| with_time(None, || from_checks(9, "exponent loss transform", exponent_transform(1000, SEED), None))),
        Box::new(|| with_time(None, maxwell_solve)),
        Box::new(|| with_time(None, || from_checks(11, "optimizer oracles", optimizer_oracles(), None))),
        Box::new(|| with_time(None, reproducibility)),
    ];
    let mut hard_failures = 0;
    for run in criteria {
        let c = run();
        let status = match (c.passed, c.known_gap) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2}: {status} {} ({:.1} s)", c.id, c.title, c.seconds);
        for d in &c.details {
            println!("    {d}");
        }
        hard_failures += usize::from(!c.passed && !c.known_gap);
    }
    if hard_failures == 0 {
        println!("acceptance: all criteria met or recorded as known gaps");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {hard_failures} criteria failed");
        ExitCode::FAILURE
    }
}
