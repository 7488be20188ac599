use alloc::string::String;
use alloc::vec::Vec;

use crate::data::UserId;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("numerical failure in {op}: {detail}")]
    Numerical { op: &'static str, detail: String },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("degenerate (zero-norm) vector in {op}")]
    DegenerateVector { op: &'static str },
    #[error("invalid transform matrix: {0:?}")]
    InvalidMatrix(Vec<Violation>),
    #[error("invalid augmentation arguments for {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("empty view")]
    EmptyView,
    #[error("user {0} has fewer than 3 interactions")]
    SequenceTooShort(UserId),
    #[error("no items left to sample from in {op}: need {needed}, have {available}")]
    Exhausted {
        op: &'static str,
        needed: usize,
        available: usize,
    },
}

/// A single broken row or column constraint of a candidate transform matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    /// Entry that is neither 0 nor 1.
    Entry { row: usize, col: usize, value: f64 },
    Row { row: usize, sum: f64 },
    Col { col: usize, sum: f64 },
    NotSquare { rows: usize, cols: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
