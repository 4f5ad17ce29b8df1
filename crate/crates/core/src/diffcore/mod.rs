//! Reverse-mode automatic differentiation over dense double-precision
//! tensors.
//!
//! The engine builds a retained, acyclic computation graph of immutable
//! nodes. Values are computed eagerly at construction and cached, so
//! evaluation is deterministic and a node can be shared freely. The key
//! property is that [`gradient`] expresses the backward pass using the same
//! primitives as the forward pass: the returned gradients are ordinary
//! graph nodes and can be differentiated again, which is what the unrolled
//! bilevel machinery needs.
//!
//! Everything is `f64`; the unrolled second-order chain is too
//! ill-conditioned for single precision. Activations are smooth (`tanh`,
//! `sigmoid`) so second derivatives exist everywhere.

mod fd;
mod grad;
mod node;
mod rng;
mod tensor;

pub use fd::{finite_difference_check, FdReport};
pub use grad::gradient;
pub use node::{Node, OpKind};
pub use rng::Rng;
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised while building or differentiating a graph.
#[derive(Debug, Clone, Error)]
pub enum DiffError {
    /// Operand shapes do not conform to the primitive's shape rule.
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Shape-level contract violation that involves a single operand.
    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },
    /// Mathematical domain violation (log of a non-positive value).
    #[error("{op}: domain error: {reason}")]
    Domain { op: &'static str, reason: String },
    /// `gradient` was asked to differentiate a non-scalar output.
    #[error("gradient: output must be a scalar, got shape {shape:?}")]
    NonScalarOutput { shape: Vec<usize> },
    /// `gradient` was asked for the gradient of a node that does not
    /// require gradients.
    #[error("gradient: wrt node {index} does not require gradients")]
    NotDifferentiable { index: usize },
    /// Tensor construction with inconsistent data length.
    #[error("tensor: shape {shape:?} expects {expected} values, got {got}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
}
