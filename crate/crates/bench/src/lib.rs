//! Benchmark fixtures.

use std::sync::Arc;

use awpinn::harness::{preset, Scale};
use awpinn::optimize::init_fixed;
use awpinn::problems::sample_points;
use awpinn::select::run_selection;
use awpinn::{FieldModels, PdeProblem, PointSet, RunConfig};

/// A desk-scale problem with its training points and Stage 1 / Stage 2 models at initialisation.
pub struct Fixture {
    pub config: RunConfig,
    pub problem: PdeProblem,
    pub points: PointSet,
    pub fixed: FieldModels,
    pub adaptive: FieldModels,
}

impl Fixture {
    /// Builds the fixture for a named preset with the residual budget replaced by `residual`.
    pub fn new(name: &str, residual: usize) -> Self {
        let mut config = preset(name, Scale::Desk).expect("known preset");
        config.points.residual = residual;
        let problem = config.problem.build().expect("valid problem");
        let counts = config.points.per_condition(&problem).expect("valid counts");
        let points = sample_points(&problem, &counts, &config.points.test, 7).expect("valid points");
        let family = Arc::new(config.family.build(&problem.domain).expect("valid family"));
        let fixed = init_fixed(&problem, &family, 7).expect("valid models");
        let report = run_selection(&problem, &fixed, &points, &config.selection).expect("non-empty selection");
        let adaptive = report.active.to_models(problem.dim()).expect("valid transfer");
        Fixture { config, problem, points, fixed, adaptive }
    }
}
