use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the numeric core and the model built on top of it.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands of `op` have incompatible shapes.
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// An argument lies outside the domain of an operation.
    Domain(String),
    /// A caller broke an API contract (non-scalar loss, non-deterministic function, ...).
    Contract(String),
    /// Input data violates a dataset invariant.
    Data(String),
    /// Training produced a non-finite loss.
    Divergence { epoch: usize, example: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, left, right } => {
                write!(f, "{op}: incompatible shapes {left:?} and {right:?}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Divergence { epoch, example } => write!(
                f,
                "loss became non-finite in epoch {epoch} on example {example:?}"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim_err<T>(op: &'static str, left: &[usize], right: &[usize]) -> Result<T> {
    Err(Error::Dimension {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    })
}
