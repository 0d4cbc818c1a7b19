//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Graph`] records operations on [`Tensor`]s in creation order, which is
//! also a topological order. Trainable values live outside the graph in
//! [`ParamStore`]s that the graph borrows, so building a graph per example
//! costs nothing for the model weights. [`Graph::backward`] accumulates into a
//! [`Gradients`] value that mirrors those stores.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{gradient_check, gradient_check_coords, relative_error};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::{ParamStore, Tensor};

use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("index {index} out of range for {op} with {len} rows")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("gradient store does not match parameter store")]
    StoreMismatch,
}
