//! Run configuration, read from TOML.
//!
//! ```toml
//! name = "heat-0.12"
//! seeds = [1, 2, 3]
//!
//! [problem]
//! kind = "heat"
//! eps = 0.12
//!
//! [points]
//! residual = 2000
//! initial = 100
//! boundary = 200
//! test = [101, 101]
//!
//! [family]
//! levels = [[0, 3], [0, 4]]
//! margin = 0.3
//!
//! [selection]
//! pde = "< 0.98"
//! initial = "> 0.5"
//! boundary = "< 0.002"
//! top_percent = 8
//!
//! [train]
//! adam_iterations = 1000
//! adam = { learning_rate = 1e-2 }
//! lbfgs = { max_iterations = 300 }
//! weights = { residual = 0.01, supervised = 1.0 }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::FamilyConfig;
use crate::fdtd::FdtdConfig;
use crate::optimize::TrainConfig;
use crate::problems::{
    make_flow, make_heat_conduction, make_maxwell_tez, make_poisson_localized, FlowBoundary, PdeProblem, PulseSource, Region,
    Role,
};
use crate::select::SelectionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Heat {
        eps: f64,
    },
    Poisson {
        eps: f64,
    },
    Flow {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_period")]
        period: f64,
        #[serde(default)]
        boundary: FlowBoundary,
    },
    Maxwell {
        #[serde(default)]
        source: PulseSource,
    },
}

fn default_amplitude() -> f64 {
    100.0
}

fn default_period() -> f64 {
    0.05
}

impl ProblemSpec {
    pub fn build(&self) -> Result<PdeProblem> {
        match *self {
            ProblemSpec::Heat { eps } => make_heat_conduction(eps),
            ProblemSpec::Poisson { eps } => make_poisson_localized(eps),
            ProblemSpec::Flow { amplitude, period, boundary } => make_flow(amplitude, period, boundary),
            ProblemSpec::Maxwell { source } => make_maxwell_tez(source),
        }
    }
}

/// Point budget by role. Several conditions of one role share its budget
/// in proportion to their facet counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCounts {
    pub residual: usize,
    #[serde(default)]
    pub initial: usize,
    #[serde(default)]
    pub boundary: usize,
    /// Nodes per axis of the uniform evaluation lattice.
    pub test: Vec<usize>,
}

impl PointCounts {
    /// Per-condition counts in the problem's condition order.
    pub fn per_condition(&self, problem: &PdeProblem) -> Result<Vec<usize>> {
        let facets = |r: &Region| match r {
            Region::Interior => 1,
            Region::Facets(f) => f.len(),
        };
        let mut counts = vec![0; problem.conditions.len()];
        for (role, budget) in [(Role::Residual, self.residual), (Role::Initial, self.initial), (Role::Boundary, self.boundary)] {
            let members: Vec<usize> = (0..counts.len()).filter(|&c| problem.conditions[c].role == role).collect();
            let weight: usize = members.iter().map(|&c| facets(&problem.conditions[c].region)).sum();
            let mut left = budget;
            for (k, &c) in members.iter().enumerate() {
                let share = if k + 1 == members.len() { left } else { budget * facets(&problem.conditions[c].region) / weight };
                counts[c] = share;
                left -= share;
            }
            if !members.is_empty() && members.iter().any(|&c| counts[c] == 0) {
                return Err(Error::Config(format!("{} point budget {budget} leaves a condition empty", role.as_str())));
            }
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub problem: ProblemSpec,
    pub points: PointCounts,
    pub family: FamilyConfig,
    pub selection: SelectionConfig,
    pub train: TrainConfig,
    /// One repeat per seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Artifact directory; nothing is written when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// FDTD grid for problems without a closed-form solution.
    #[serde(default)]
    pub reference: Option<FdtdConfig>,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `a.b.c=value` assignments; the value is read as TOML and
    /// falls back to a plain string.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for s in sets {
            let (path, raw) = s.split_once('=').ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
            let keys: Vec<&str> = path.trim().split('.').collect();
            let (last, parents) = keys.split_last().expect("split yields one element");
            let mut table = &mut root;
            for k in parents {
                table = table
                    .entry(k.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("`{k}` in `{path}` is not a section")))?;
            }
            table.insert(last.to_string(), value);
        }
        let cfg: RunConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let problem = self.problem.build()?;
        self.selection.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.family.levels.len() != problem.dim() {
            return Err(Error::Config(format!(
                "family has {} axes, problem `{}` has {}",
                self.family.levels.len(),
                problem.name,
                problem.dim()
            )));
        }
        self.family.size(&problem.domain)?;
        if self.points.test.len() != problem.dim() || self.points.test.iter().any(|&n| n < 2) {
            return Err(Error::Config(format!("test lattice needs {} axes with at least 2 nodes", problem.dim())));
        }
        self.points.per_condition(&problem)?;
        if let Some(r) = &self.reference {
            r.cells()?;
        }
        Ok(())
    }
}
