use crate::error::{AutodiffError, Result};
use crate::float::Float;
use crate::ops::{nchw, Op};
use crate::tape::{GradSink, Tape, Var};
use crate::tensor::Tensor;

/// Per-channel running mean and (unbiased) variance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Float> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// Train mode normalizes with batch statistics and folds them into the
/// running estimate; eval mode reads the running estimate only.
pub enum BatchNormStats<'a, T> {
    Train(&'a mut RunningStats<T>),
    Eval(&'a RunningStats<T>),
}

impl<T: Float> Tape<T> {
    pub fn batch_norm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: BatchNormStats<'_, T>,
        cfg: BatchNormConfig,
    ) -> Result<Var> {
        const OP: &str = "batch_norm2d";
        let [n, c, h, w] = nchw(OP, self.shape(input))?;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [c] {
                return Err(AutodiffError::shape(
                    OP,
                    format!("{name} must be [{c}], got {:?}", self.shape(v)),
                ));
            }
        }
        let channels = match &stats {
            BatchNormStats::Train(s) => s.channels(),
            BatchNormStats::Eval(s) => s.channels(),
        };
        if channels != c {
            return Err(AutodiffError::shape(
                OP,
                format!("running stats track {channels} channels, input has {c}"),
            ));
        }

        let plane = h * w;
        let m = n * plane;
        let eps = T::lit(cfg.eps);
        let x = self.value(input).data();
        let mut inv_std = vec![T::zero(); c];
        let mut shift = vec![T::zero(); c];
        let batch_stats = matches!(stats, BatchNormStats::Train(_));
        match stats {
            BatchNormStats::Train(running) => {
                if n < 2 {
                    return Err(AutodiffError::invalid(
                        OP,
                        "train mode needs a batch of at least 2",
                    ));
                }
                let momentum = T::lit(cfg.momentum);
                let count = T::from_usize(m).expect("count");
                for ch in 0..c {
                    let values = || {
                        (0..n).flat_map(move |b| &x[(b * c + ch) * plane..(b * c + ch + 1) * plane])
                    };
                    let mean = values().copied().sum::<T>() / count;
                    let var = values().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
                    inv_std[ch] = T::one() / (var + eps).sqrt();
                    shift[ch] = mean;
                    let unbiased = var * count / (count - T::one());
                    running.mean[ch] = (T::one() - momentum) * running.mean[ch] + momentum * mean;
                    running.var[ch] = (T::one() - momentum) * running.var[ch] + momentum * unbiased;
                }
            }
            BatchNormStats::Eval(running) => {
                for ch in 0..c {
                    inv_std[ch] = T::one() / (running.var[ch] + eps).sqrt();
                    shift[ch] = running.mean[ch];
                }
            }
        }

        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for b in 0..n {
            for ch in 0..c {
                let range = (b * c + ch) * plane..(b * c + ch + 1) * plane;
                for i in range {
                    let xh = (x[i] - shift[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        let value = Tensor::new([n, c, h, w], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward<T: Float>(
    input: Var,
    gamma: Var,
    beta: Var,
    xhat: &[T],
    inv_std: &[T],
    batch_stats: bool,
    grad: &[T],
    tape: &Tape<T>,
    sink: &mut GradSink<'_, T>,
) {
    let [n, c, h, w] = nchw("batch_norm2d", tape.shape(input)).expect("recorded shape");
    let plane = h * w;
    let count = T::from_usize(n * plane).expect("count");
    let g = tape.value(gamma).data();

    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            for i in (b * c + ch) * plane..(b * c + ch + 1) * plane {
                dgamma[ch] += grad[i] * xhat[i];
                dbeta[ch] += grad[i];
            }
        }
    }

    if sink.wants(input) {
        let mut dx = vec![T::zero(); grad.len()];
        for ch in 0..c {
            let scale = g[ch] * inv_std[ch];
            for b in 0..n {
                for i in (b * c + ch) * plane..(b * c + ch + 1) * plane {
                    dx[i] = if batch_stats {
                        // sum(dy) = dbeta, sum(dy * xhat) = dgamma
                        scale * (grad[i] - dbeta[ch] / count - xhat[i] * dgamma[ch] / count)
                    } else {
                        scale * grad[i]
                    };
                }
            }
        }
        sink.add(input, dx);
    }
    sink.add(gamma, dgamma);
    sink.add(beta, dbeta);
}
