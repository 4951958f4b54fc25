use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("space/function mismatch: {0}")]
    FamilyMismatch(String),

    #[error("singular pivot at row {row}")]
    SingularPivot { row: usize },

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("newton failed to converge after {iterations} iterations (last residual {last_residual:.3e})")]
    NewtonDiverged {
        iterations: usize,
        last_residual: f64,
        trace: Vec<f64>,
    },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
