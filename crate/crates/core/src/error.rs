use thiserror::Error;

/// Errors raised by the descent library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("weights are not on the simplex: {0}")]
    Simplex(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Power transform evaluated outside `(alpha - 1) v + 1 > 0`.
    #[error("transform domain violated at atom {atom}: v = {value}")]
    TransformDomain { atom: usize, value: f64 },

    /// A gradient estimate contains non-finite entries.
    #[error("non-finite gradient at step {step} for atoms {atoms:?}")]
    NonFiniteGradient { step: usize, atoms: Vec<usize> },

    #[error("Renyi bound undefined: log argument {0} <= 0")]
    BoundUndefined(f64),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures caused by numerics during a run (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::TransformDomain { .. }
                | Error::NonFiniteGradient { .. }
                | Error::BoundUndefined(_)
                | Error::DegenerateWeights(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
