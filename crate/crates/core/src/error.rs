use std::path::PathBuf;

use thiserror::Error;

use crate::data::Side;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters supplied by the caller.
    Usage,
    /// Input file or data problems.
    Data,
    /// The data are valid but the requested estimate cannot be computed.
    Infeasible,
}

#[derive(Debug, Error)]
pub enum RdError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: cannot parse `{value}` in column `{column}` as a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data on the {side} side: have {have}, need at least {need}")]
    InsufficientData {
        side: Side,
        have: usize,
        need: usize,
    },

    #[error("singular design on the {side} side (order {order})")]
    SingularDesign { side: Side, order: usize },

    #[error("degenerate outcome: {0}")]
    Degenerate(String),

    #[error("exact enumeration needs {count} assignments, above the cap of {cap}")]
    EnumerationCap { count: u128, cap: u64 },

    #[error("window selection failed: {0}")]
    WindowSelection(String),
}

impl RdError {
    pub fn class(&self) -> ErrorClass {
        match self {
            RdError::Io { .. }
            | RdError::Csv(_)
            | RdError::MissingColumn(_)
            | RdError::BadCell { .. }
            | RdError::InvalidData(_) => ErrorClass::Data,
            RdError::InvalidArgument(_) => ErrorClass::Usage,
            RdError::InsufficientData { .. }
            | RdError::SingularDesign { .. }
            | RdError::Degenerate(_)
            | RdError::EnumerationCap { .. }
            | RdError::WindowSelection(_) => ErrorClass::Infeasible,
        }
    }
}

pub type Result<T> = std::result::Result<T, RdError>;
