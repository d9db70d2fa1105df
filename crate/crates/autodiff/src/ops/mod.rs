mod activation;
mod conv;
mod linear;
mod loss;
mod norm;
mod pool;

pub use conv::Conv2dOptions;
pub use norm::{BatchNormConfig, BatchNormStats, RunningStats};
pub use pool::Pool2dOptions;

use crate::float::Float;
use crate::tape::{GradSink, Tape, Var};
use crate::tensor::Tensor;

pub(crate) use conv::ConvGeometry;

/// Backward context saved by each op.
pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
        cols: Vec<T>,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Relu {
        input: Var,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        input: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Add {
        lhs: Var,
        rhs: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    Reshape {
        input: Var,
    },
    Mse {
        pred: Var,
        target: Vec<T>,
    },
}

impl<T> Op<T> {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            }
            | Op::Linear {
                input,
                weight,
                bias,
            } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::BatchNorm {
                input, gamma, beta, ..
            } => vec![*input, *gamma, *beta],
            Op::Relu { input }
            | Op::MaxPool { input, .. }
            | Op::GlobalAvgPool { input }
            | Op::Dropout { input, .. }
            | Op::Reshape { input } => vec![*input],
            Op::Add { lhs, rhs } => vec![*lhs, *rhs],
            Op::Mse { pred, .. } => vec![*pred],
        }
    }
}

pub(crate) fn backward<T: Float>(
    op: &Op<T>,
    out: &Tensor<T>,
    grad: &[T],
    tape: &Tape<T>,
    sink: &mut GradSink<'_, T>,
) {
    match op {
        Op::Leaf => {}
        Op::Conv2d {
            input,
            weight,
            bias,
            geom,
            cols,
        } => conv::backward(*input, *weight, *bias, geom, cols, grad, tape, sink),
        Op::BatchNorm {
            input,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats,
        } => norm::backward(
            *input,
            *gamma,
            *beta,
            xhat,
            inv_std,
            *batch_stats,
            grad,
            tape,
            sink,
        ),
        Op::Relu { input } => activation::relu_backward(*input, out, grad, sink),
        Op::MaxPool { input, argmax } => pool::max_backward(*input, argmax, grad, tape, sink),
        Op::GlobalAvgPool { input } => pool::avg_backward(*input, grad, tape, sink),
        Op::Linear {
            input,
            weight,
            bias,
        } => linear::backward(*input, *weight, *bias, grad, tape, sink),
        Op::Add { lhs, rhs } => {
            sink.add(*lhs, grad.to_vec());
            sink.add(*rhs, grad.to_vec());
        }
        Op::Dropout { input, mask } => sink.add(
            *input,
            grad.iter().zip(mask).map(|(&g, &m)| g * m).collect(),
        ),
        Op::Reshape { input } => sink.add(*input, grad.to_vec()),
        Op::Mse { pred, target } => loss::mse_backward(*pred, target, grad[0], tape, sink),
    }
}

/// Asserts an NCHW shape and returns its extents.
pub(crate) fn nchw(op: &'static str, shape: &[usize]) -> crate::Result<[usize; 4]> {
    match shape {
        &[n, c, h, w] => Ok([n, c, h, w]),
        other => Err(crate::AutodiffError::shape(
            op,
            format!("expected NCHW input, got {other:?}"),
        )),
    }
}
