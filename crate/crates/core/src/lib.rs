//! Wavelet-based physics-informed solvers with adaptive dilations.

pub mod error;
pub mod fdtd;
pub mod harness;
pub mod family;
pub mod loss;
pub mod model;
pub mod ntk;
pub mod optimize;
pub mod problems;
pub mod reduce;
pub mod select;
pub mod wavelet;

pub use error::{Error, Result};
pub use family::{AxisSpec, FamilyConfig, FamilyIndex, FamilySet};
pub use fdtd::{FdtdConfig, FieldId, YeeGrid};
pub use harness::{preset, MetricReport, RunConfig, Scale};
pub use loss::{LossAssembler, LossBreakdown, LossMode, LossWeights};
pub use model::{Derivative, FieldModels, ModelKind, ModelState, TermDerivatives};
pub use ntk::{KernelMatrix, KernelTarget};
pub use optimize::{run_pipeline, AdamConfig, LbfgsConfig, PipelineResult, TrainConfig};
pub use problems::{PdeProblem, PointSet, Points, PulseSource, TestGrid};
pub use select::{ActiveSet, SelectionConfig};
pub use wavelet::MotherWavelet;
