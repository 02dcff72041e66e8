use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the reduced-order modelling core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Every target correction in a loss evaluation had (numerically) zero norm.
    #[error("degenerate target: all {count} correction targets have zero norm")]
    DegenerateTarget { count: usize },

    /// Relative error or improvement ratio requested against a zero reference.
    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    /// A non-finite loss showed up during training. The history up to and
    /// including the offending epoch is kept for diagnosis.
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize, history: Vec<f64> },

    #[error("corrupt data: {0}")]
    Corrupt(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidInput(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
