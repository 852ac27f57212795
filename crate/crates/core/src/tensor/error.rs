use thiserror::Error;

use super::DType;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: &'static str },

    #[error("shape {shape:?} needs {expected} elements, got {actual}")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected rank {expected}, got {actual}")]
    Rank {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("expected {expected} tensor, got {actual}")]
    DType { expected: DType, actual: DType },

    #[error("{op}: axis {axis} out of range for rank {rank}")]
    Axis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("invalid permutation {perm:?} for rank {rank}")]
    Permutation { perm: Vec<usize>, rank: usize },

    #[error("slice {start}..{end} out of range on axis {axis} (extent {extent})")]
    SliceRange {
        axis: usize,
        start: usize,
        end: usize,
        extent: usize,
    },

    #[error("index {value} at position {position} out of range [0, {bound})")]
    Index {
        position: usize,
        value: i64,
        bound: usize,
    },

    #[error("{op}: {reason}")]
    Invalid { op: &'static str, reason: String },
}
