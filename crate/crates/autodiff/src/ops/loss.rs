use crate::error::{AutodiffError, Result};
use crate::float::Float;
use crate::ops::Op;
use crate::tape::{GradSink, Tape, Var};
use crate::tensor::Tensor;

impl<T: Float> Tape<T> {
    /// Mean squared error against a constant target. `pred` may have any
    /// shape whose element count equals `target.len()`.
    pub fn mse_loss(&mut self, pred: Var, target: &[T]) -> Result<Var> {
        let p = self.value(pred).data();
        if target.is_empty() {
            return Err(AutodiffError::invalid("mse_loss", "empty input"));
        }
        if p.len() != target.len() {
            return Err(AutodiffError::shape(
                "mse_loss",
                format!("{} predictions vs {} targets", p.len(), target.len()),
            ));
        }
        let n = T::from_usize(p.len()).expect("count");
        let loss = p
            .iter()
            .zip(target)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
        ))
    }
}

pub(super) fn mse_backward<T: Float>(
    pred: Var,
    target: &[T],
    grad: T,
    tape: &Tape<T>,
    sink: &mut GradSink<'_, T>,
) {
    let p = tape.value(pred).data();
    let scale = grad * T::lit(2.0) / T::from_usize(p.len()).expect("count");
    sink.add(
        pred,
        p.iter()
            .zip(target)
            .map(|(&a, &b)| scale * (a - b))
            .collect(),
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_values() {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(Tensor::zeros([2]));
        let loss = tape.mse_loss(p, &[1.0, 3.0]).unwrap();
        assert_eq!(tape.value(loss).item(), Some(5.0));
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(p).unwrap().data(), &[-1.0, -3.0]);

        let q = tape.param(Tensor::new([3], vec![1.0, 2.0, 3.0]).unwrap());
        let zero = tape.mse_loss(q, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(tape.value(zero).item(), Some(0.0));
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(Tensor::zeros([2]));
        assert!(tape.mse_loss(p, &[]).is_err());
        assert!(tape.mse_loss(p, &[1.0]).is_err());
    }
}
