//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! Computations are recorded on a [`Tape`]; every operation appends a node
//! whose value is computed eagerly and whose backward rule is replayed by
//! [`Tape::backward`] in reverse recording order. Recording order is a
//! topological order of the graph, so each node is visited exactly once.
//!
//! The layer set is the one a ResNet-18 needs: convolution, batch
//! normalization, relu, max/global-average pooling, linear, residual add,
//! inverted dropout and the mean-squared-error loss.

pub mod checkpoint;
mod error;
mod float;
mod ops;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use float::{gemm, Float, MatRef};
pub use ops::{BatchNormConfig, BatchNormStats, Conv2dOptions, Pool2dOptions, RunningStats};
pub use tape::{Mode, Tape, Var};
pub use tensor::Tensor;
