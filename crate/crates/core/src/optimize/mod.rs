//! Adam, L-BFGS and the two-stage training pipeline.

mod adam;
mod lbfgs;
mod pipeline;

pub use adam::{AdamConfig, AdamState};
pub use lbfgs::{lbfgs_minimize, IterationInfo, LbfgsConfig, LbfgsReport, LbfgsState, Termination};
pub use pipeline::{
    field_seed, init_fixed, run_pipeline, Handoff, Phase, PhaseTimings, PipelineResult, TrainConfig, TrainingRecord,
};
