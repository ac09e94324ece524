use thiserror::Error;

/// Errors raised anywhere in the solver stack.
///
/// Variants fall in two families: invalid input (configuration, geometry,
/// index ranges) and numerical failure (divergence, instability,
/// degenerate losses). [`Error::is_numerical`] tells them apart so the CLI
/// can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("derivative order {0} is not supported (expected {1})")]
    UnsupportedOrder(u8, &'static str),

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("relative L2 metric undefined: reference field has zero norm")]
    ZeroNormReference,

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("exponent-regularized loss is degenerate: term `{term}` is zero with exponent {exponent}")]
    DegenerateLoss { term: String, exponent: f64 },

    #[error("non-finite gradient at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("FDTD instability at time index {step}")]
    Instability { step: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("kernel assembly needs {needed} Jacobian entries, budget is {budget}")]
    MemoryBudget { needed: usize, budget: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateLoss { .. }
                | Error::Divergence { .. }
                | Error::Instability { .. }
                | Error::EigenNoConvergence { .. }
                | Error::ZeroNormReference
                | Error::EmptySelection(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
