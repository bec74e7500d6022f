use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("polygon is not simple and counterclockwise: {0}")]
    NonSimplePolygon(String),
    #[error("target mesh size must be positive, got {0}")]
    DegenerateTarget(f64),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("prism split produced a nonconforming mesh: {0}")]
    NonconformingSplit(String),
    #[error("element kind {kind} is not supported for {role}")]
    UnsupportedKind { kind: String, role: &'static str },
    #[error("spaces are not built on the same column structure")]
    ColumnMismatch,
    #[error("vertical velocity evaluation failed: {0}")]
    EvaluatorDomain(String),
    #[error("vertical ray left its column at {0:?}")]
    RayEscape([f64; 3]),
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("eigenvalue iteration stalled after {0} iterations")]
    EigSolverStalled(usize),
    #[error("manufactured solution not available for this domain: {0}")]
    DomainUnsupported(String),
    #[error("run halted by hook at step {0}")]
    HaltedByHook(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
