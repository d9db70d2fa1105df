use crate::error::{AutodiffError, Result};
use crate::float::{gemm, Float, MatRef};
use crate::ops::Op;
use crate::tape::{GradSink, Tape, Var};
use crate::tensor::Tensor;

impl<T: Float> Tape<T> {
    /// `N x F` input times `F x O` weight, plus an optional `O` bias.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        const OP: &str = "linear";
        let [n, f] = matrix(OP, "input", self.shape(input))?;
        let [wf, o] = matrix(OP, "weight", self.shape(weight))?;
        if wf != f {
            return Err(AutodiffError::shape(
                OP,
                format!("input has {f} features, weight expects {wf}"),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(AutodiffError::shape(
                    OP,
                    format!("bias must be [{o}], got {:?}", self.shape(b)),
                ));
            }
        }
        let mut out = match bias {
            Some(b) => self.value(b).data().repeat(n),
            None => vec![T::zero(); n * o],
        };
        gemm(
            T::one(),
            MatRef::row_major(self.value(input).data(), n, f),
            MatRef::row_major(self.value(weight).data(), f, o),
            T::one(),
            &mut out,
        );
        let value = Tensor::new([n, o], out)?;
        Ok(self.push(
            value,
            Op::Linear {
                input,
                weight,
                bias,
            },
        ))
    }
}

fn matrix(op: &'static str, what: &str, shape: &[usize]) -> Result<[usize; 2]> {
    match shape {
        &[r, c] => Ok([r, c]),
        other => Err(AutodiffError::shape(
            op,
            format!("{what} must be 2-D, got {other:?}"),
        )),
    }
}

pub(super) fn backward<T: Float>(
    input: Var,
    weight: Var,
    bias: Option<Var>,
    grad: &[T],
    tape: &Tape<T>,
    sink: &mut GradSink<'_, T>,
) {
    let (n, f) = (tape.shape(input)[0], tape.shape(input)[1]);
    let o = tape.shape(weight)[1];
    let dy = MatRef::row_major(grad, n, o);
    if sink.wants(input) {
        let mut dx = vec![T::zero(); n * f];
        gemm(
            T::one(),
            dy,
            MatRef::row_major(tape.value(weight).data(), f, o).t(),
            T::zero(),
            &mut dx,
        );
        sink.add(input, dx);
    }
    if sink.wants(weight) {
        let mut dw = vec![T::zero(); f * o];
        gemm(
            T::one(),
            MatRef::row_major(tape.value(input).data(), n, f).t(),
            dy,
            T::zero(),
            &mut dw,
        );
        sink.add(weight, dw);
    }
    if let Some(b) = bias.filter(|&b| sink.wants(b)) {
        let mut db = vec![T::zero(); o];
        for row in grad.chunks_exact(o) {
            db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
        }
        sink.add(b, db);
    }
}
