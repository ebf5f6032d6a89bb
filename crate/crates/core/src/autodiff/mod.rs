//! Reverse-mode differentiation over dense 2-D arrays.
//!
//! A [`Tape`] records one forward pass. Every operation appends a node whose
//! parents already exist on the tape, so reverse insertion order is a valid
//! topological order and [`Tape::backward`] visits each node once.
//!
//! Trainable weights live in a [`ParamStore`] that outlives any single tape.
//! [`Tape::param`] copies a parameter's current value onto the tape; after
//! `backward`, the gradient of every parameter node is *added* to the store's
//! gradient buffer. Call [`ParamStore::zero_grad`] before each step.
//!
//! Shapes must match exactly for binary element-wise ops. The only
//! broadcasts are scalar operands and the explicit row ops
//! ([`Tape::add_row`], [`Tape::sub_row`]) used for per-column biases.

mod gradcheck;
mod params;
mod tape;

pub use gradcheck::grad_check;
pub use params::{Param, ParamId, ParamStore};
pub use tape::{sigmoid, softplus, Activation, ElementwiseKind, Operand, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("dimension mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backward already ran on this tape; record a new forward pass first")]
    AlreadyBackpropagated,
    #[error("backward needs a 1x1 loss node, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite loss value {0}")]
    NonFinite(f64),
}

impl AutodiffError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        AutodiffError::Shape {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }
}
