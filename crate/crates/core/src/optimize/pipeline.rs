use std::cell::RefCell;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::lbfgs::{lbfgs_minimize, norm, LbfgsConfig, LbfgsReport};
use crate::error::{Error, Result};
use crate::family::{FamilyConfig, FamilySet};
use crate::loss::{LossAssembler, LossBreakdown, LossMode, LossWeights};
use crate::model::{FieldModels, ModelState};
use crate::problems::{PdeProblem, PointSet};
use crate::select::{run_selection, SelectionConfig, SelectionReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Stage-1 Adam iterations on the fixed-basis model.
    pub adam_iterations: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub lbfgs: LbfgsConfig,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default = "weighted")]
    pub mode: LossMode,
    /// With `false`, Stage 2 keeps the full fixed basis and skips selection.
    #[serde(default = "default_true")]
    pub adaptive: bool,
}

fn weighted() -> LossMode {
    LossMode::Weighted
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.lbfgs.validate()?;
        self.mode.validate()?;
        let w = self.weights;
        if !(w.residual >= 0.0 && w.supervised >= 0.0 && w.residual.is_finite() && w.supervised.is_finite()) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub phase: Phase,
    pub iteration: usize,
    pub terms: Vec<f64>,
    pub total: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub elapsed: f64,
}

/// Loss of the Stage-1 model with inactive coefficients zeroed against the
/// loss of the transferred adaptive model, both before any Stage-2 update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Handoff {
    pub restricted_loss: f64,
    pub adaptive_loss: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub stage1: f64,
    pub selection: f64,
    pub stage2: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub family: Arc<FamilySet>,
    pub stage1: FieldModels,
    pub selection: Option<SelectionReport>,
    pub models: FieldModels,
    pub handoff: Option<Handoff>,
    pub initial: LossBreakdown,
    pub after_stage1: LossBreakdown,
    pub last: LossBreakdown,
    pub lbfgs: LbfgsReport,
    pub timings: PhaseTimings,
    /// Evaluations where exponent mode hit a zero term and the weighted
    /// objective was used instead.
    pub degenerate_fallbacks: usize,
}

/// Seed of field `f`'s initialization, derived from the run seed.
pub fn field_seed(seed: u64, field: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(field as u64 + 1)
}

/// Xavier-initialized fixed-basis models, one per field, sharing `family`.
pub fn init_fixed(problem: &PdeProblem, family: &Arc<FamilySet>, seed: u64) -> Result<FieldModels> {
    FieldModels::new((0..problem.n_fields()).map(|f| ModelState::xavier_fixed(family.clone(), field_seed(seed, f))).collect())
}

struct Objective<'a> {
    asm: LossAssembler<'a>,
    weights: LossWeights,
    mode: LossMode,
    fallbacks: usize,
}

impl<'a> Objective<'a> {
    fn new(problem: &'a PdeProblem, points: &'a PointSet, models: &FieldModels, cfg: &TrainConfig) -> Result<Self> {
        Ok(Objective { asm: LossAssembler::new(problem, points, models)?, weights: cfg.weights, mode: cfg.mode, fallbacks: 0 })
    }

    fn eval(&mut self, models: &FieldModels, with_grad: bool) -> Result<(LossBreakdown, Vec<f64>)> {
        let r = match self.asm.evaluate(models, self.weights, self.mode, with_grad) {
            Err(Error::DegenerateLoss { .. }) => {
                self.fallbacks += 1;
                self.asm.evaluate(models, self.weights, LossMode::Weighted, with_grad)?
            }
            r => r?,
        };
        Ok((r.0, r.1.unwrap_or_default()))
    }
}

fn adam_loop(
    obj: &mut Objective<'_>,
    models: &mut FieldModels,
    cfg: &TrainConfig,
    start: Instant,
    log: &mut dyn FnMut(&TrainingRecord),
) -> Result<(LossBreakdown, usize)> {
    let mut adam = AdamState::new(cfg.adam, models.n_params());
    let mut params = models.params();
    for it in 0..cfg.adam_iterations {
        let (b, g) = obj.eval(models, true)?;
        if !b.total.is_finite() {
            return Err(Error::Divergence { iteration: it + 1 });
        }
        let before = params.clone();
        adam.step(&mut params, &g)?;
        let step = params.iter().zip(&before).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        models.set_params(&params)?;
        log(&TrainingRecord {
            phase: Phase::Adam,
            iteration: it + 1,
            terms: b.terms,
            total: b.total,
            grad_norm: norm(&g),
            step,
            elapsed: start.elapsed().as_secs_f64(),
        });
    }
    let (b, _) = obj.eval(models, false)?;
    Ok((b, obj.fallbacks))
}

fn lbfgs_loop(
    obj: &mut Objective<'_>,
    models: &mut FieldModels,
    cfg: LbfgsConfig,
    start: Instant,
    log: &mut dyn FnMut(&TrainingRecord),
) -> Result<(LossBreakdown, LbfgsReport)> {
    let x0 = models.params();
    let work = RefCell::new(models.clone());
    let last_terms = RefCell::new(Vec::new());
    let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut m = work.borrow_mut();
        m.set_params(x)?;
        let (b, g) = obj.eval(&m, true)?;
        *last_terms.borrow_mut() = b.terms;
        Ok((b.total, g))
    };
    let observer = |info: &super::lbfgs::IterationInfo| {
        log(&TrainingRecord {
            phase: Phase::Lbfgs,
            iteration: info.iteration,
            terms: last_terms.borrow().clone(),
            total: info.loss,
            grad_norm: info.grad_norm,
            step: info.step,
            elapsed: start.elapsed().as_secs_f64(),
        });
    };
    let (x, report) = lbfgs_minimize(cfg, f, &x0, observer)?;
    models.set_params(&x)?;
    let (b, _) = obj.eval(models, false)?;
    Ok((b, report))
}

/// Two-stage training: Adam on the fixed wavelet basis, similarity-based
/// selection and transfer, then L-BFGS on the adaptive model.
pub fn run_pipeline(
    problem: &PdeProblem,
    points: &PointSet,
    family_cfg: &FamilyConfig,
    selection: &SelectionConfig,
    train: &TrainConfig,
    seed: u64,
    log: &mut dyn FnMut(&TrainingRecord),
) -> Result<PipelineResult> {
    train.validate()?;
    selection.validate()?;
    let start = Instant::now();
    let family = Arc::new(family_cfg.build(&problem.domain)?);
    let mut stage1 = init_fixed(problem, &family, seed)?;

    let mut obj1 = Objective::new(problem, points, &stage1, train)?;
    let (initial, _) = obj1.eval(&stage1, false)?;
    let (after_stage1, _) = adam_loop(&mut obj1, &mut stage1, train, start, log)?;
    let t1 = start.elapsed().as_secs_f64();

    let (selection_report, mut models, handoff) = if train.adaptive {
        let report = run_selection(problem, &stage1, points, selection)?;
        let adaptive = report.active.to_models(problem.dim())?;
        let mut restricted = stage1.clone();
        for (field, fa) in restricted.fields_mut().iter_mut().zip(&report.active.fields) {
            let keep = fa.indices.iter().copied().collect::<std::collections::HashSet<_>>();
            for (i, c) in field.coeffs_mut().iter_mut().enumerate() {
                if !keep.contains(&i) {
                    *c = 0.0;
                }
            }
        }
        let (r, _) = obj1.eval(&restricted, false)?;
        (Some(report), adaptive, Some(r.total))
    } else {
        (None, stage1.clone(), None)
    };
    let t2 = start.elapsed().as_secs_f64();

    let mut obj2 = Objective::new(problem, points, &models, train)?;
    obj2.fallbacks = obj1.fallbacks;
    let handoff = match handoff {
        Some(restricted_loss) => {
            let (a, _) = obj2.eval(&models, false)?;
            Some(Handoff {
                restricted_loss,
                adaptive_loss: a.total,
                relative_error: (a.total - restricted_loss).abs() / restricted_loss.abs().max(f64::MIN_POSITIVE),
            })
        }
        None => None,
    };
    let (last, lbfgs) = lbfgs_loop(&mut obj2, &mut models, train.lbfgs, start, log)?;
    let t3 = start.elapsed().as_secs_f64();

    Ok(PipelineResult {
        family,
        stage1,
        selection: selection_report,
        models,
        handoff,
        initial,
        after_stage1,
        last,
        lbfgs,
        timings: PhaseTimings { stage1: t1, selection: t2 - t1, stage2: t3 - t2 },
        degenerate_fallbacks: obj2.fallbacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_heat_conduction, sample_points};
    use crate::select::Threshold;

    fn tiny() -> (PdeProblem, PointSet, FamilyConfig, SelectionConfig, TrainConfig) {
        let p = make_heat_conduction(0.5).unwrap();
        let pts = sample_points(&p, &[60, 20, 20], &[5, 5], 3).unwrap();
        let fam = FamilyConfig { levels: vec![[0, 1], [0, 1]], margin: 0.2 };
        let sel = SelectionConfig {
            pde: Some(Threshold::greater(0.0)),
            initial: None,
            boundary: None,
            top_percent: 20.0,
            zero_rhs_tolerance: 1e-12,
            rescale_coefficients: true,
        };
        let train = TrainConfig {
            adam_iterations: 20,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig { max_iterations: 15, ..Default::default() },
            weights: LossWeights::default(),
            mode: LossMode::Weighted,
            adaptive: true,
        };
        (p, pts, fam, sel, train)
    }

    #[test]
    fn pipeline_runs_and_hands_off_exactly() {
        let (p, pts, fam, sel, train) = tiny();
        let mut rows = Vec::new();
        let r = run_pipeline(&p, &pts, &fam, &sel, &train, 7, &mut |t| rows.push(t.clone())).unwrap();
        let h = r.handoff.unwrap();
        assert!(h.relative_error < 1e-8, "{h:?}");
        assert_eq!(rows.iter().filter(|t| t.phase == Phase::Adam).count(), 20);
        assert!(r.last.total <= h.adaptive_loss);
        assert!(r.models.fields()[0].is_adaptive());
        let lb: Vec<f64> = rows.iter().filter(|t| t.phase == Phase::Lbfgs).map(|t| t.total).collect();
        assert!(lb.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn pipeline_is_reproducible() {
        let (p, pts, fam, sel, train) = tiny();
        let a = run_pipeline(&p, &pts, &fam, &sel, &train, 11, &mut |_| {}).unwrap();
        let b = run_pipeline(&p, &pts, &fam, &sel, &train, 11, &mut |_| {}).unwrap();
        let (pa, pb) = (a.models.params(), b.models.params());
        assert!(pa.iter().zip(&pb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn zero_adam_and_full_selection_still_completes() {
        let (p, pts, fam, mut sel, mut train) = tiny();
        train.adam_iterations = 0;
        sel.pde = None;
        sel.top_percent = 100.0;
        let r = run_pipeline(&p, &pts, &fam, &sel, &train, 1, &mut |_| {}).unwrap();
        assert_eq!(r.selection.unwrap().active.total_units(), r.family.len());
        assert!(r.handoff.unwrap().relative_error < 1e-8);
    }

    #[test]
    fn fixed_basis_variant_skips_selection() {
        let (p, pts, fam, sel, mut train) = tiny();
        train.adaptive = false;
        let r = run_pipeline(&p, &pts, &fam, &sel, &train, 1, &mut |_| {}).unwrap();
        assert!(r.selection.is_none() && r.handoff.is_none());
        assert!(!r.models.fields()[0].is_adaptive());
    }
}
