use thiserror::Error;

/// Errors raised across the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Eigenvalue matching between two consecutive samples was ambiguous.
    #[error("ambiguous eigenvalue matching on [{t_start}, {t_end}]; refine the grid")]
    RefineGrid { t_start: f64, t_end: f64 },

    /// The slow matrix is not diagonalizable (or too close to it) on a time window.
    #[error("non-simple eigenvalues on [{t_start}, {t_end}]")]
    NonSimpleEigenvalues { t_start: f64, t_end: f64 },

    /// An integrated trajectory crossed the blow-up cap.
    #[error("trajectory diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("step size underflow at t = {t} (stiff or singular right-hand side)")]
    StepUnderflow { t: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate projection: eliminated block of the quadratic form is singular")]
    DegenerateProjection,

    #[error("irregular patch failed: {0}")]
    PatchFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn invalid_config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidConfig(msg.into()))
}
