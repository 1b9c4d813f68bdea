//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A contract violation on an argument (out-of-range `l`, excluded least
    /// element, unsupported tensor order, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two index vectors of different arity were compared.
    #[error("arity mismatch: expected {expected} components, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    /// Two tensors of different shape were combined.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// θ/η vectors over different bases were combined.
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    /// Floating-point breakdown: overflow/underflow in ψ or Q, a Fisher
    /// system that stays unsolvable after ridge escalation, or a failed
    /// line search.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Gradient descent produced non-finite parameters.
    #[error("gradient descent diverged: {0}")]
    Diverged(String),

    /// The iterative-scaling oracle hit an unreachable constraint.
    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
