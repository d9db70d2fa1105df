//! Central finite-difference gradient oracle. Only evaluates forward passes,
//! so it shares no code with the backward rules it checks.

use resgene_autodiff::{Tape, Tensor, Var};

pub const STEP: f64 = 1e-5;

/// Relative error with an absolute floor so entries that are zero up to
/// finite-difference noise do not blow up the ratio.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Worst relative error over every element of every input.
///
/// `loss` must build a scalar from the given input vars; it is rebuilt on a
/// fresh tape for every perturbation.
pub fn max_rel_error<F>(inputs: &[Tensor<f64>], loss: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = loss(&mut tape, &vars);
    tape.backward(out).expect("scalar loss");
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
        })
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let out = loss(&mut tape, &vars);
        tape.value(out).item().expect("scalar")
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + STEP;
            let up = eval(&work);
            work[i].data_mut()[j] = orig - STEP;
            let down = eval(&work);
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(grad.data()[j], numeric));
        }
    }
    worst
}
