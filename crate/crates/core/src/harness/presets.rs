//! Named benchmark configurations.
//!
//! Full-scale presets carry the appendix hyperparameters. Desk-scale
//! presets keep the problem, weights and selection rules but use narrower
//! resolution ranges, fewer points and shorter optimizer budgets.
//!
//! A name may end in `-wpinn` (fixed basis only, no selection) or
//! `-mmpinn` (exponent-compressed loss with the appendix exponents).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::FamilyConfig;
use crate::fdtd::FdtdConfig;
use crate::loss::{LossMode, LossWeights};
use crate::optimize::{AdamConfig, LbfgsConfig, TrainConfig};
use crate::problems::{FlowBoundary, PulseSource};
use crate::select::{SelectionConfig, Threshold};

use super::config::{PointCounts, ProblemSpec, RunConfig};

pub const PRESET_NAMES: [&str; 7] = ["heat-0.12", "heat-0.11", "heat-0.10", "poisson-0.05", "poisson-0.02", "flow", "maxwell"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            _ => Err(Error::Config(format!("unknown scale `{s}` (expected desk or full)"))),
        }
    }
}

struct Row {
    problem: ProblemSpec,
    weights: LossWeights,
    initial: Option<Threshold>,
    boundary: Option<Threshold>,
    pde: Threshold,
    top_percent: f64,
    mmpinn_p: f64,
    full_points: [usize; 3],
    full_adam: usize,
    full_levels: Vec<[i32; 2]>,
    full_margin: f64,
    desk_points: [usize; 3],
    desk_adam: usize,
    desk_lbfgs: usize,
    desk_levels: Vec<[i32; 2]>,
    test: Vec<usize>,
}

fn gt(v: f64) -> Option<Threshold> {
    Some(Threshold::greater(v))
}

fn lt(v: f64) -> Option<Threshold> {
    Some(Threshold::less(v))
}

fn row(name: &str) -> Result<Row> {
    let heat = |eps: f64, ic: f64, bc: f64, pde: f64, top: f64, p: f64, adam: usize| Row {
        problem: ProblemSpec::Heat { eps },
        weights: LossWeights { residual: 0.01, supervised: 1.0 },
        initial: gt(ic),
        boundary: lt(bc),
        pde: Threshold::less(pde),
        top_percent: top,
        mmpinn_p: p,
        full_points: [20000, 1000, 2000],
        full_adam: adam,
        full_levels: vec![[-6, 5], [-6, 6]],
        full_margin: 0.3,
        desk_points: [2000, 100, 200],
        desk_adam: adam.min(2000),
        desk_lbfgs: 300,
        desk_levels: vec![[0, 3], [0, 4]],
        test: vec![101, 101],
    };
    let poisson = |eps: f64, pde: f64, top: f64, p: f64, adam: usize, margin: f64, desk_levels: Vec<[i32; 2]>| Row {
        problem: ProblemSpec::Poisson { eps },
        weights: LossWeights { residual: 0.01, supervised: 10.0 },
        initial: None,
        boundary: gt(0.2),
        pde: Threshold::less(pde),
        top_percent: top,
        mmpinn_p: p,
        full_points: [10000, 0, 4000],
        full_adam: adam,
        full_levels: vec![[-6, 6], [-6, 6]],
        full_margin: margin,
        desk_points: [2000, 0, 400],
        desk_adam: adam,
        desk_lbfgs: 300,
        desk_levels,
        test: vec![101, 101],
    };
    Ok(match name {
        "heat-0.12" => heat(0.12, 0.5, 0.002, 0.980, 8.0, 3.0, 1000),
        "heat-0.11" => heat(0.11, 0.2, 0.02, 0.988, 10.0, 4.0, 2000),
        "heat-0.10" => heat(0.10, 0.4, 0.003, 0.984, 8.0, 4.0, 3000),
        "poisson-0.05" => poisson(0.05, 0.850, 2.0, 3.0, 1000, 0.1, vec![[0, 5], [-1, 2]]),
        "poisson-0.02" => poisson(0.02, 0.975, 1.0, 4.0, 2000, 0.2, vec![[0, 6], [-1, 2]]),
        "flow" => Row {
            problem: ProblemSpec::Flow { amplitude: 100.0, period: 0.05, boundary: FlowBoundary::Inflow },
            weights: LossWeights { residual: 1.0, supervised: 1.0 },
            initial: gt(0.5),
            boundary: gt(0.95),
            pde: Threshold::less(0.25),
            top_percent: 2.0,
            mmpinn_p: 3.0,
            full_points: [20000, 1000, 1000],
            full_adam: 1000,
            full_levels: vec![[-6, 6], [-6, 6]],
            full_margin: 0.3,
            desk_points: [3000, 150, 150],
            desk_adam: 1000,
            desk_lbfgs: 300,
            desk_levels: vec![[-1, 2], [0, 6]],
            test: vec![101, 101],
        },
        "maxwell" => Row {
            problem: ProblemSpec::Maxwell { source: PulseSource::default() },
            weights: LossWeights { residual: 0.1, supervised: 1.0 },
            initial: lt(0.95),
            boundary: lt(0.95),
            pde: Threshold::less(0.91),
            top_percent: 5.0,
            mmpinn_p: 2.0,
            full_points: [40000, 5000, 5000],
            full_adam: 10000,
            full_levels: vec![[-5, 4], [-5, 4], [-5, 4]],
            full_margin: 0.1,
            desk_points: [2000, 250, 250],
            desk_adam: 1000,
            desk_lbfgs: 100,
            desk_levels: vec![[0, 3], [0, 3], [0, 2]],
            test: vec![41, 41, 11],
        },
        _ => return Err(Error::Config(format!("unknown preset `{name}` (known: {})", PRESET_NAMES.join(", ")))),
    })
}

/// Builds a named preset, including `-wpinn` and `-mmpinn` variants.
pub fn preset(name: &str, scale: Scale) -> Result<RunConfig> {
    let (base, variant) = match name.rsplit_once('-') {
        Some((b, v @ ("wpinn" | "mmpinn"))) => (b, Some(v)),
        _ => (name, None),
    };
    let r = row(base)?;
    let (points, adam_iterations, lbfgs, levels, lr) = match scale {
        Scale::Full => (r.full_points, r.full_adam, 50_000, r.full_levels.clone(), 1e-3),
        Scale::Desk => (r.desk_points, r.desk_adam, r.desk_lbfgs, r.desk_levels.clone(), 1e-2),
    };
    let mut cfg = RunConfig {
        name: name.to_string(),
        points: PointCounts { residual: points[0], initial: points[1], boundary: points[2], test: r.test.clone() },
        family: FamilyConfig { levels, margin: r.full_margin },
        selection: SelectionConfig {
            pde: Some(r.pde),
            initial: r.initial,
            boundary: r.boundary,
            top_percent: r.top_percent,
            zero_rhs_tolerance: 1e-12,
            rescale_coefficients: true,
        },
        train: TrainConfig {
            adam_iterations,
            adam: AdamConfig { learning_rate: lr, ..AdamConfig::default() },
            lbfgs: LbfgsConfig { max_iterations: lbfgs, ..LbfgsConfig::default() },
            weights: r.weights,
            mode: LossMode::Weighted,
            adaptive: true,
        },
        seeds: match scale {
            Scale::Desk => vec![1, 2, 3, 4, 5],
            Scale::Full => (1..=10).collect(),
        },
        output: None,
        reference: matches!(r.problem, ProblemSpec::Maxwell { .. }).then(FdtdConfig::default),
        problem: r.problem,
    };
    match variant {
        Some("wpinn") => cfg.train.adaptive = false,
        Some("mmpinn") => {
            cfg.train.adaptive = false;
            cfg.train.mode = LossMode::Exponent { p: r.mmpinn_p, q: 1.0 };
        }
        _ => {}
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appendix_values_survive() {
        let p = preset("poisson-0.05", Scale::Full).unwrap();
        assert_eq!(p.selection.top_percent, 2.0);
        assert_eq!(p.train.weights.supervised, 10.0);
        assert_eq!(p.train.adam_iterations, 1000);
        let h = preset("heat-0.12", Scale::Full).unwrap();
        assert_eq!(h.points.residual, 20000);
        assert_eq!(h.selection.pde, Some(Threshold::less(0.98)));
        let d = preset("heat-0.12", Scale::Desk).unwrap();
        assert!(d.train.adam_iterations <= 2000 && d.train.lbfgs.max_iterations <= 2000);
        assert!(d.points.residual <= h.points.residual / 4);
    }

    #[test]
    fn variants() {
        let w = preset("flow-wpinn", Scale::Desk).unwrap();
        assert!(!w.train.adaptive);
        let m = preset("heat-0.11-mmpinn", Scale::Desk).unwrap();
        assert_eq!(m.train.mode, LossMode::Exponent { p: 4.0, q: 1.0 });
        assert!(preset("heat-0.13", Scale::Desk).is_err());
    }
}
