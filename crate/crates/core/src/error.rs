//! Error type shared across the crate.
//!
//! Variants are grouped by how a caller should react: `Io` and `Parse` are
//! environment problems, `Quality` is a refused deployment of a model that
//! trained but measured below its accuracy floor, and everything else is an
//! invalid input of some kind.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A world spec, schedule, instruction or config fails validation.
    #[error("invalid specification: {0}")]
    Spec(String),

    /// A concept name is not known to the vocabulary, table or report at hand.
    #[error("unknown concept: {0}")]
    Lookup(String),

    /// An index such as a timestep falls outside its valid range.
    #[error("{0}")]
    Range(String),

    /// An operation received an empty collection it cannot work with.
    #[error("empty input: {0}")]
    Empty(String),

    /// Input is structurally unusable, e.g. a group with no members.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Non-finite values, zero norms and similar numeric breakdowns.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A trained model measured below its quality floor and was refused.
    #[error("quality gate failed for {what}: measured {measured:.4}, floor {floor:.4}")]
    Quality {
        what: String,
        measured: f64,
        floor: f64,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A text file failed to parse; positions are 1-based.
    #[error("{path}:{line}:{col}: {msg}")]
    Parse {
        path: String,
        line: usize,
        col: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
