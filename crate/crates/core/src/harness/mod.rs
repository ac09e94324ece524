//! Configuration, presets, metrics and benchmark orchestration.

pub mod checks;
pub mod config;
pub mod metrics;
pub mod presets;
pub mod run;

pub use config::{PointCounts, ProblemSpec, RunConfig};
pub use metrics::{mean_std, median, relative_l2, FailedRepeat, MetricReport, RepeatMetric};
pub use presets::{preset, Scale, PRESET_NAMES};
pub use run::{rerun_manifest, run_benchmark, solve_seed, version_tag, Manifest, Rerun, SolveOutcome};
pub use checks::{oracle_suite, run_group, CheckOutcome, CHECK_GROUPS};
