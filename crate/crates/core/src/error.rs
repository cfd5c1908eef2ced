use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("epsilon must be a finite positive number, got {0} (use eval_limit for the epsilon = 0 kernel)")]
    InvalidEpsilon(f64),

    #[error("spatial dimension must be at least 1")]
    InvalidDimension,

    #[error("non-finite value while evaluating {context}")]
    NonFinite { context: String },

    #[error("singular point: {0}")]
    Singular(String),

    #[error("finite-difference stencil does not fit: {0}")]
    Stencil(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid manifold specification: {0}")]
    InvalidManifold(String),

    #[error("invalid spin structure: {0}")]
    InvalidSpin(String),

    #[error(
        "truncation radius {required:.3} exceeds the cap {max_radius:.3}; \
         increase epsilon * t or loosen the tolerance"
    )]
    TruncationRadius { required: f64, max_radius: f64 },

    #[error("truncation check failed: doubling the radius changed the sum by {change:e} > {abs_tol:e}")]
    TruncationUnsound { change: f64, abs_tol: f64 },

    #[error("derivative order {order} exceeds the supported maximum {max}")]
    DerivativeOrder { order: u32, max: u32 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite sample at point {point:?}")]
    NonFiniteSample { point: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
