use crate::error::{AutodiffError, Result};
use crate::float::Float;
use crate::ops::conv::window_extent;
use crate::ops::{nchw, Op};
use crate::tape::{GradSink, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pool2dOptions {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Pool2dOptions {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            padding: 0,
        }
    }
}

impl<T: Float> Tape<T> {
    /// Window maximum. Padded cells never win; the backward pass routes each
    /// output gradient to the input cell that produced the maximum.
    pub fn max_pool2d(&mut self, input: Var, opts: Pool2dOptions) -> Result<Var> {
        const OP: &str = "max_pool2d";
        let [n, c, h, w] = nchw(OP, self.shape(input))?;
        if opts.kernel == 0 || opts.stride == 0 {
            return Err(AutodiffError::invalid(
                OP,
                "kernel and stride must be positive",
            ));
        }
        if 2 * opts.padding > opts.kernel {
            return Err(AutodiffError::invalid(
                OP,
                "padding must be at most half the kernel",
            ));
        }
        let (Some(oh), Some(ow)) = (
            window_extent(h, opts.kernel, opts.stride, opts.padding),
            window_extent(w, opts.kernel, opts.stride, opts.padding),
        ) else {
            return Err(AutodiffError::shape(
                OP,
                format!("{k}x{k} window larger than {h}x{w} input", k = opts.kernel),
            ));
        };

        let x = self.value(input).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for map in 0..n * c {
            let base = map * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best: Option<(T, usize)> = None;
                    for ky in 0..opts.kernel {
                        let Some(iy) = (oy * opts.stride + ky)
                            .checked_sub(opts.padding)
                            .filter(|&y| y < h)
                        else {
                            continue;
                        };
                        for kx in 0..opts.kernel {
                            let Some(ix) = (ox * opts.stride + kx)
                                .checked_sub(opts.padding)
                                .filter(|&v| v < w)
                            else {
                                continue;
                            };
                            let idx = base + iy * w + ix;
                            if best.is_none_or(|(v, _)| x[idx] > v) {
                                best = Some((x[idx], idx));
                            }
                        }
                    }
                    let (v, idx) = best.expect("window overlaps the input");
                    out.push(v);
                    argmax.push(idx);
                }
            }
        }
        let value = Tensor::new([n, c, oh, ow], out)?;
        Ok(self.push(value, Op::MaxPool { input, argmax }))
    }

    /// Spatial mean of every feature map: `N x C x H x W -> N x C`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let [n, c, h, w] = nchw("global_avg_pool", self.shape(input))?;
        let plane = h * w;
        let denom = T::from_usize(plane).expect("plane");
        let out = self
            .value(input)
            .data()
            .chunks_exact(plane)
            .map(|m| m.iter().copied().sum::<T>() / denom)
            .collect();
        let value = Tensor::new([n, c], out)?;
        Ok(self.push(value, Op::GlobalAvgPool { input }))
    }
}

pub(super) fn max_backward<T: Float>(
    input: Var,
    argmax: &[usize],
    grad: &[T],
    tape: &Tape<T>,
    sink: &mut GradSink<'_, T>,
) {
    let mut dx = vec![T::zero(); tape.value(input).numel()];
    for (&idx, &g) in argmax.iter().zip(grad) {
        dx[idx] += g;
    }
    sink.add(input, dx);
}

pub(super) fn avg_backward<T: Float>(
    input: Var,
    grad: &[T],
    tape: &Tape<T>,
    sink: &mut GradSink<'_, T>,
) {
    let [_, _, h, w] = nchw("global_avg_pool", tape.shape(input)).expect("recorded shape");
    let plane = h * w;
    let denom = T::from_usize(plane).expect("plane");
    let dx = grad
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g / denom, plane))
        .collect();
    sink.add(input, dx);
}
