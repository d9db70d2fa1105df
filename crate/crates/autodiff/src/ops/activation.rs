use rand::Rng;

use crate::error::{AutodiffError, Result};
use crate::float::Float;
use crate::ops::Op;
use crate::tape::{GradSink, Mode, Tape, Var};
use crate::tensor::Tensor;

impl<T: Float> Tape<T> {
    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let value = self
            .value(input)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        Ok(self.push(value, Op::Relu { input }))
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(AutodiffError::shape(
                "add",
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ));
        }
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add { lhs, rhs }))
    }

    pub fn reshape(&mut self, input: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { input }))
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Eval mode, or a zero rate, passes the input through unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::invalid(
                "dropout",
                format!("rate must lie in [0, 1), got {rate}"),
            ));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(input);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let x = self.value(input);
        let mask: Vec<T> = (0..x.numel())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Dropout { input, mask }))
    }
}

pub(super) fn relu_backward<T: Float>(
    input: Var,
    out: &Tensor<T>,
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let dx = grad
        .iter()
        .zip(out.data())
        .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
        .collect();
    sink.add(input, dx);
}
