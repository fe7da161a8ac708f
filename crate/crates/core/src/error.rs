use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// Operand shapes do not conform; carries both shapes.
    #[error("shape mismatch in {op}: left is {lhs}, right is {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {what} at index {index}: {value}")]
    NonFinite {
        what: String,
        index: usize,
        value: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Iterative solver failed to reach tolerance; carries the last residual.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e}, tol {tol:.3e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("linear system is rank deficient beyond ridge rescue (pivot {pivot:.3e} at row {row})")]
    RankDeficient { row: usize, pivot: f64 },

    /// Training aborted on a non-finite loss; carries the run coordinates.
    #[error("non-finite loss ({value}) at epoch {epoch}, batch {batch}")]
    TrainingDiverged {
        epoch: usize,
        batch: usize,
        value: f64,
    },

    #[error("input {value} outside domain {domain}")]
    OutOfDomain { value: f64, domain: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: impl std::fmt::Display, rhs: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }
}
