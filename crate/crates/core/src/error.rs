//! Error types shared across the pipeline.

use thiserror::Error;

/// Library-wide error type.
///
/// Variants map onto the CLI exit-code contract: configuration/validation
/// problems are user errors (exit 2), I/O failures are environment errors
/// (exit 3), and training/cell failures are runtime errors (exit 4).
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad filter corner, bad counts, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Structurally invalid input (shape mismatch, unknown label, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Input that is formally valid but numerically degenerate
    /// (all-zero normalization group, zero baseline, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Training failed (single-class data, divergence, ...).
    #[error("training error: {0}")]
    Training(String),

    /// A single (input set, classifier) evaluation cell failed.
    #[error("cell {cell} failed: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }

    /// Wrap an error with the identity of the evaluation cell it came from.
    pub fn in_cell(self, cell: impl Into<String>) -> Self {
        Error::Cell {
            cell: cell.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
