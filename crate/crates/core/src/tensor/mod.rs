//! Dense arrays, a define-by-run reverse-mode autodiff graph, and Adam.

mod adam;
mod array;
mod graph;

pub use adam::{AdamConfig, AdamState};
pub use array::Array;
pub use graph::{Gradients, Graph, Node, NodeId, Op, POW_GUARD};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("non-finite input value {value} at position {index}")]
    NonFiniteInput { index: usize, value: f64 },
    #[error("rows differ in length: expected {expected}, found {found}")]
    RaggedRows { expected: usize, found: usize },
    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("non-finite gradient flowing out of node {node} ({op})")]
    NonFiniteGradient { node: usize, op: &'static str },
    #[error("backward root must be scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("graph cycle detected at node {node}")]
    Cycle { node: usize },
    #[error("no feed for placeholder '{0}'")]
    MissingFeed(String),
    #[error("{op} expects rank >= {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("axis {axis} invalid for {op} on shape {shape:?}")]
    BadAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("invalid permutation {perm:?} for shape {shape:?}")]
    BadPermutation { perm: Vec<usize>, shape: Vec<usize> },
    #[error("index {index} out of range for extent {extent}")]
    IndexOutOfRange { index: usize, extent: usize },
    #[error("{op} over an empty axis")]
    EmptyReduction { op: &'static str },
    #[error("{0}")]
    InvalidArgument(String),
}
