use alloc::string::String;
use alloc::vec::Vec;

use crate::embedding::Method;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for {len} nodes")]
    OutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero query vector")]
    ZeroVector,

    #[error("eigen solver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("paper {query} has no vector in {}", fmt_methods(.missing))]
    NoVector { query: usize, missing: Vec<Method> },

    #[error("paper {0} cannot be imputed: no usable neighbors")]
    Unimputable(usize),

    #[error("paper {0} already has a vector")]
    VectorPresent(usize),

    #[error("lists are for different queries ({0} vs {1})")]
    QueryMismatch(usize, usize),

    #[error("single-class input: AUC needs both positives and negatives")]
    SingleClass,

    #[error("index digest does not match the embedding it is loaded against")]
    DigestMismatch,
}

fn fmt_methods(m: &[Method]) -> String {
    let mut s = String::new();
    for (i, method) in m.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(method.as_str());
    }
    s
}

pub type Result<T> = core::result::Result<T, Error>;
