use crate::error::{AutodiffError, Result};
use crate::float::Float;
use crate::ops::{self, Op};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train/eval switch for batch normalization and dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Append-only record of a computation.
///
/// Nodes are stored in creation order, which is a topological order since an
/// op can only consume vars that already exist.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
    recording: bool,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
            recording: true,
        }
    }

    /// A tape that keeps no backward context. Every var it produces is a
    /// constant, which saves the im2col buffers during prediction.
    pub fn inference() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input. Gradients are only accumulated for leaves created
    /// with `requires_grad` on a recording tape.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        let requires_grad = requires_grad && self.recording;
        self.push_node(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Gradient accumulated on a leaf by [`backward`](Self::backward).
    pub fn grad(&self, var: Var) -> Option<Tensor<T>> {
        let g = self.leaf_grads.get(var.0)?.as_ref()?;
        Some(Tensor::new(self.shape(var).to_vec(), g.clone()).expect("grad matches value"))
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad =
            self.recording && op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.push_node(value, op, requires_grad)
    }

    fn push_node(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Populates gradients of `loss` on every leaf that requires them.
    ///
    /// Contributions through fan-out are summed. Calling this twice adds the
    /// second set of gradients onto the first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(shape.to_vec()));
        }
        if self.leaf_grads.len() < self.nodes.len() {
            self.leaf_grads.resize(self.nodes.len(), None);
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.leaf_grads[idx] {
                    Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, &g)| *a += g),
                    slot @ None => *slot = Some(grad),
                }
                continue;
            }
            let mut sink = GradSink {
                nodes: &self.nodes,
                grads: &mut grads,
            };
            ops::backward(&node.op, &node.value, &grad, self, &mut sink);
        }
        Ok(())
    }

    /// Drops accumulated leaf gradients.
    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }
}

/// Collects input-gradient contributions emitted by an op's backward rule.
pub(crate) struct GradSink<'a, T> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<T: Float> GradSink<'_, T> {
    pub(crate) fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub(crate) fn add(&mut self, var: Var, contribution: Vec<T>) {
        if !self.wants(var) {
            return;
        }
        debug_assert_eq!(contribution.len(), self.nodes[var.0].value.numel());
        match &mut self.grads[var.0] {
            Some(acc) => acc
                .iter_mut()
                .zip(&contribution)
                .for_each(|(a, &g)| *a += g),
            slot @ None => *slot = Some(contribution),
        }
    }
}
