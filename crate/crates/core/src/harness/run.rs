//! Benchmark execution and run artifacts.
//!
//! With an output directory set, a benchmark writes
//!
//! ```text
//! <output>/config.toml          effective configuration
//! <output>/report.json          aggregated MetricReport
//! <output>/repeats.csv          per-seed errors, source of the aggregates
//! <output>/seed-<s>/manifest.json
//! <output>/seed-<s>/training_log.csv
//! <output>/seed-<s>/prediction.csv   test lattice, prediction, reference, |error|
//! <output>/seed-<s>/model.txt
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::ORDERING_TAG;
use crate::fdtd::{solve_reference, FdtdConfig, FieldId};
use crate::optimize::{run_pipeline, Handoff, LbfgsReport, PhaseTimings, PipelineResult, Termination, TrainingRecord};
use crate::problems::{sample_points, PdeProblem, Points, PointSet};

use super::config::{ProblemSpec, RunConfig};
use super::metrics::{relative_l2, FailedRepeat, MetricReport, RepeatMetric};

/// Crate version and basis ordering, stored in every manifest.
pub fn version_tag() -> String {
    format!("{} {} ({ORDERING_TAG})", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Reference values per field on `test`: the closed form when the problem
/// has one, otherwise the FDTD solution.
pub fn reference_values(cfg: &RunConfig, problem: &PdeProblem, test: &Points) -> Result<Vec<Vec<f64>>> {
    if problem.has_exact() {
        return (0..problem.n_fields())
            .map(|f| {
                test.iter()
                    .map(|x| problem.exact_value(f, x).ok_or_else(|| Error::invalid("exact solution missing a field")))
                    .collect()
            })
            .collect();
    }
    match &cfg.problem {
        ProblemSpec::Maxwell { source } => {
            let grid = cfg.reference.unwrap_or_default();
            let (s, _) = solve_reference(&grid, source, test)?;
            Ok([FieldId::Ex, FieldId::Ey, FieldId::Hz].iter().map(|&id| s.field(id).to_vec()).collect())
        }
        _ => Err(Error::invalid(format!("no reference solution for `{}`", problem.name))),
    }
}

/// The FDTD grid a Maxwell run compares against.
pub fn reference_grid(cfg: &RunConfig) -> Option<FdtdConfig> {
    matches!(cfg.problem, ProblemSpec::Maxwell { .. }).then(|| cfg.reference.unwrap_or_default())
}

pub struct SolveOutcome {
    pub seed: u64,
    pub points: PointSet,
    pub result: PipelineResult,
    /// Per field, on the test lattice.
    pub predictions: Vec<Vec<f64>>,
    pub errors: Vec<f64>,
    pub log: Vec<TrainingRecord>,
}

impl SolveOutcome {
    pub fn repeat_metric(&self) -> RepeatMetric {
        RepeatMetric {
            seed: self.seed,
            errors: self.errors.clone(),
            termination: self.result.lbfgs.termination,
            lbfgs_iterations: self.result.lbfgs.iterations,
            final_loss: self.result.last.total,
            handoff_error: self.result.handoff.map(|h| h.relative_error),
            selected_units: self.result.selection.as_ref().map(|s| s.active.total_units()),
            timings: self.result.timings,
        }
    }
}

/// One seed end to end: points, both stages, and the test-lattice metric.
pub fn solve_seed(
    cfg: &RunConfig,
    problem: &PdeProblem,
    reference: &[Vec<f64>],
    seed: u64,
    observer: &mut dyn FnMut(&TrainingRecord),
) -> Result<SolveOutcome> {
    let counts = cfg.points.per_condition(problem)?;
    let points = sample_points(problem, &counts, &cfg.points.test, seed)?;
    let mut log = Vec::new();
    let result = run_pipeline(problem, &points, &cfg.family, &cfg.selection, &cfg.train, seed, &mut |r| {
        observer(r);
        log.push(r.clone());
    })?;
    let test = &points.test.points;
    let predictions: Vec<Vec<f64>> = result.models.fields().iter().map(|m| test.iter().map(|x| m.forward(x)).collect()).collect();
    let errors = predictions.iter().zip(reference).map(|(p, r)| relative_l2(p, r)).collect::<Result<Vec<_>>>()?;
    Ok(SolveOutcome { seed, points, result, predictions, errors, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// Configuration of this single run (one seed, no output directory).
    pub config: RunConfig,
    pub seed: u64,
    pub workers: usize,
    pub termination: Termination,
    pub lbfgs: LbfgsReport,
    pub handoff: Option<Handoff>,
    pub degenerate_fallbacks: usize,
    pub timings: PhaseTimings,
    pub errors: Vec<f64>,
    /// IEEE-754 bit patterns of `errors`, for exact comparison.
    pub error_bits: Vec<String>,
}

impl Manifest {
    pub fn new(cfg: &RunConfig, outcome: &SolveOutcome) -> Self {
        let r = &outcome.result;
        Manifest {
            version: version_tag(),
            config: RunConfig { seeds: vec![outcome.seed], output: None, ..cfg.clone() },
            seed: outcome.seed,
            workers: rayon::current_num_threads(),
            termination: r.lbfgs.termination,
            lbfgs: r.lbfgs.clone(),
            handoff: r.handoff,
            degenerate_fallbacks: r.degenerate_fallbacks,
            timings: r.timings,
            errors: outcome.errors.clone(),
            error_bits: outcome.errors.iter().map(|e| format!("{:016x}", e.to_bits())).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

pub fn training_log_csv(problem: &PdeProblem, log: &[TrainingRecord]) -> String {
    let mut out = String::from("phase,iteration,total,grad_norm,step,elapsed");
    for c in &problem.conditions {
        let _ = write!(out, ",{}", c.name);
    }
    out.push('\n');
    for r in log {
        let _ = write!(out, "{},{},{:e},{:e},{:e},{:.6}", r.phase.as_str(), r.iteration, r.total, r.grad_norm, r.step, r.elapsed);
        for t in &r.terms {
            let _ = write!(out, ",{t:e}");
        }
        out.push('\n');
    }
    out
}

/// Test lattice with prediction, reference and point-wise absolute error
/// per field.
pub fn prediction_csv(problem: &PdeProblem, test: &Points, predictions: &[Vec<f64>], reference: &[Vec<f64>]) -> String {
    let mut out = problem.axis_names.join(",");
    for f in &problem.field_names {
        let _ = write!(out, ",{f}_pred,{f}_ref,{f}_abs_err");
    }
    out.push('\n');
    for (i, x) in test.iter().enumerate() {
        let coords: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&coords.join(","));
        for (p, r) in predictions.iter().zip(reference) {
            let _ = write!(out, ",{:e},{:e},{:e}", p[i], r[i], (p[i] - r[i]).abs());
        }
        out.push('\n');
    }
    out
}

/// Writes the per-seed artifact directory and returns its path.
pub fn write_seed_artifacts(dir: &Path, cfg: &RunConfig, problem: &PdeProblem, reference: &[Vec<f64>], outcome: &SolveOutcome) -> Result<PathBuf> {
    let d = dir.join(format!("seed-{}", outcome.seed));
    fs::create_dir_all(&d)?;
    let manifest = serde_json::to_string_pretty(&Manifest::new(cfg, outcome)).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(d.join("manifest.json"), manifest)?;
    fs::write(d.join("training_log.csv"), training_log_csv(problem, &outcome.log))?;
    fs::write(d.join("prediction.csv"), prediction_csv(problem, &outcome.points.test.points, &outcome.predictions, reference))?;
    fs::write(d.join("model.txt"), outcome.result.models.to_text())?;
    if let Some(sel) = &outcome.result.selection {
        let active = serde_json::to_string_pretty(&sel.active).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(d.join("active_set.json"), active)?;
    }
    Ok(d)
}

/// Runs every seed of `cfg`, aggregates, and writes artifacts when an
/// output directory is configured. Failed seeds are listed in the report;
/// the call fails only when no seed succeeds.
pub fn run_benchmark(cfg: &RunConfig, progress: &mut dyn FnMut(&str)) -> Result<MetricReport> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let test = crate::problems::TestGrid::new(&problem.domain, &cfg.points.test)?;
    let reference = reference_values(cfg, &problem, &test.points)?;
    if let Some(dir) = &cfg.output {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    }
    let mut repeats = Vec::new();
    let mut failed = Vec::new();
    let mut first_error = None;
    for &seed in &cfg.seeds {
        match solve_seed(cfg, &problem, &reference, seed, &mut |_| {}) {
            Ok(out) => {
                if let Some(dir) = &cfg.output {
                    write_seed_artifacts(dir, cfg, &problem, &reference, &out)?;
                }
                let m = out.repeat_metric();
                progress(&format!(
                    "{} seed {seed}: rel. L2 {} ({}, {:.1} s)",
                    cfg.name,
                    m.errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" "),
                    m.termination.as_str(),
                    m.timings.stage1 + m.timings.selection + m.timings.stage2
                ));
                repeats.push(m);
            }
            Err(e) => {
                progress(&format!("{} seed {seed}: failed: {e}", cfg.name));
                failed.push(FailedRepeat { seed, error: e.to_string() });
                first_error.get_or_insert(e);
            }
        }
    }
    if repeats.is_empty() {
        return Err(first_error.expect("at least one seed"));
    }
    let report = MetricReport::new(cfg.name.clone(), problem.field_names.clone(), repeats, failed);
    if let Some(dir) = &cfg.output {
        fs::write(dir.join("repeats.csv"), report.repeats_csv())?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(dir.join("report.json"), json)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rerun {
    pub manifest: Manifest,
    pub errors: Vec<f64>,
    /// Every error matches the stored bit pattern.
    pub identical: bool,
}

/// Repeats the run recorded in a manifest and compares the metric bit for bit.
pub fn rerun_manifest(path: &Path) -> Result<Rerun> {
    let manifest = Manifest::load(path)?;
    let cfg = &manifest.config;
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let test = crate::problems::TestGrid::new(&problem.domain, &cfg.points.test)?;
    let reference = reference_values(cfg, &problem, &test.points)?;
    let out = solve_seed(cfg, &problem, &reference, manifest.seed, &mut |_| {})?;
    let bits: Vec<String> = out.errors.iter().map(|e| format!("{:016x}", e.to_bits())).collect();
    Ok(Rerun { identical: bits == manifest.error_bits, errors: out.errors, manifest })
}
