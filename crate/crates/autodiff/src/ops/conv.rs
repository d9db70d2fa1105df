use crate::error::{AutodiffError, Result};
use crate::float::{gemm, Float, MatRef};
use crate::ops::{nchw, Op};
use crate::tape::{GradSink, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: usize,
    pub padding: usize,
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn kdim(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.oh * self.ow
    }

    fn columns(&self) -> usize {
        self.n * self.plane()
    }
}

/// Output extent of a strided window sweep, `None` if the window does not fit.
pub(crate) fn window_extent(
    size: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Option<usize> {
    let padded = size + 2 * pad;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

impl<T: Float> Tape<T> {
    /// 2D cross-correlation of an `N x Cin x H x W` input with a
    /// `Cout x Cin x kh x kw` weight, lowered to a single GEMM over im2col
    /// columns.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        opts: Conv2dOptions,
    ) -> Result<Var> {
        const OP: &str = "conv2d";
        let [n, cin, h, w] = nchw(OP, self.shape(input))?;
        let [cout, wcin, kh, kw] = match self.shape(weight) {
            &[a, b, c, d] => [a, b, c, d],
            other => {
                return Err(AutodiffError::shape(
                    OP,
                    format!("weight must be 4-D, got {other:?}"),
                ))
            }
        };
        if wcin != cin {
            return Err(AutodiffError::shape(
                OP,
                format!("input has {cin} channels, weight expects {wcin}"),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(AutodiffError::shape(
                    OP,
                    format!("bias must be [{cout}], got {:?}", self.shape(b)),
                ));
            }
        }
        if opts.stride == 0 {
            return Err(AutodiffError::invalid(OP, "stride must be positive"));
        }
        let (Some(oh), Some(ow)) = (
            window_extent(h, kh, opts.stride, opts.padding),
            window_extent(w, kw, opts.stride, opts.padding),
        ) else {
            return Err(AutodiffError::shape(
                OP,
                format!(
                    "{kh}x{kw} kernel does not fit {h}x{w} input with padding {}",
                    opts.padding
                ),
            ));
        };
        let geom = ConvGeometry {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride: opts.stride,
            pad: opts.padding,
            oh,
            ow,
        };

        let cols = im2col(self.value(input).data(), &geom);
        let (np, plane) = (geom.columns(), geom.plane());
        let mut out_mat = vec![T::zero(); cout * np];
        gemm(
            T::one(),
            MatRef::row_major(self.value(weight).data(), cout, geom.kdim()),
            MatRef::row_major(&cols, geom.kdim(), np),
            T::zero(),
            &mut out_mat,
        );

        let bias_values = bias.map(|b| self.value(b).data());
        let mut out = vec![T::zero(); n * cout * plane];
        for b in 0..n {
            for co in 0..cout {
                let shift = bias_values.map_or(T::zero(), |bv| bv[co]);
                let src = &out_mat[co * np + b * plane..co * np + (b + 1) * plane];
                let dst = &mut out[(b * cout + co) * plane..(b * cout + co + 1) * plane];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s + shift);
            }
        }

        let keep_cols = self.is_recording() && self.requires_grad(weight);
        let value = Tensor::new([n, cout, oh, ow], out)?;
        let cols = if keep_cols { cols } else { Vec::new() };
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
        ))
    }
}

/// Output positions `lo..hi` along one axis whose input index
/// `o * stride + k - pad` falls inside `0..size`.
fn valid_range(out: usize, size: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi = if size + pad > k {
        ((size + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn im2col<T: Float>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let (np, plane) = (g.columns(), g.plane());
    let mut cols = vec![T::zero(); g.kdim() * np];
    for ci in 0..g.cin {
        for ki in 0..g.kh {
            let (oy_lo, oy_hi) = valid_range(g.oh, g.h, ki, g.stride, g.pad);
            for kj in 0..g.kw {
                let (ox_lo, ox_hi) = valid_range(g.ow, g.w, kj, g.stride, g.pad);
                if ox_lo == ox_hi {
                    continue;
                }
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * np..(row + 1) * np];
                for b in 0..g.n {
                    let src = &x[(b * g.cin + ci) * g.h * g.w..(b * g.cin + ci + 1) * g.h * g.w];
                    for oy in oy_lo..oy_hi {
                        let iy = oy * g.stride + ki - g.pad;
                        let srow = &src[iy * g.w..(iy + 1) * g.w];
                        let drow = &mut dst[b * plane + oy * g.ow..b * plane + (oy + 1) * g.ow];
                        let ix0 = ox_lo * g.stride + kj - g.pad;
                        if g.stride == 1 {
                            drow[ox_lo..ox_hi].copy_from_slice(&srow[ix0..ix0 + ox_hi - ox_lo]);
                        } else {
                            for (d, &s) in drow[ox_lo..ox_hi]
                                .iter_mut()
                                .zip(srow[ix0..].iter().step_by(g.stride))
                            {
                                *d = s;
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Float>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let (np, plane) = (g.columns(), g.plane());
    let mut x = vec![T::zero(); g.n * g.cin * g.h * g.w];
    for ci in 0..g.cin {
        for ki in 0..g.kh {
            let (oy_lo, oy_hi) = valid_range(g.oh, g.h, ki, g.stride, g.pad);
            for kj in 0..g.kw {
                let (ox_lo, ox_hi) = valid_range(g.ow, g.w, kj, g.stride, g.pad);
                if ox_lo == ox_hi {
                    continue;
                }
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * np..(row + 1) * np];
                for b in 0..g.n {
                    let base = (b * g.cin + ci) * g.h * g.w;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * g.stride + ki - g.pad;
                        let srow =
                            &src[b * plane + oy * g.ow + ox_lo..b * plane + oy * g.ow + ox_hi];
                        let ix0 = ox_lo * g.stride + kj - g.pad;
                        let xrow = &mut x[base + iy * g.w..base + (iy + 1) * g.w];
                        for (d, &s) in xrow[ix0..].iter_mut().step_by(g.stride).zip(srow) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    x
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward<T: Float>(
    input: Var,
    weight: Var,
    bias: Option<Var>,
    g: &ConvGeometry,
    cols: &[T],
    grad: &[T],
    tape: &Tape<T>,
    sink: &mut GradSink<'_, T>,
) {
    let (np, plane) = (g.columns(), g.plane());
    let mut dmat = vec![T::zero(); g.cout * np];
    for b in 0..g.n {
        for co in 0..g.cout {
            let src = &grad[(b * g.cout + co) * plane..(b * g.cout + co + 1) * plane];
            dmat[co * np + b * plane..co * np + (b + 1) * plane].copy_from_slice(src);
        }
    }

    if sink.wants(weight) {
        let mut dw = vec![T::zero(); g.cout * g.kdim()];
        gemm(
            T::one(),
            MatRef::row_major(&dmat, g.cout, np),
            MatRef::row_major(cols, g.kdim(), np).t(),
            T::zero(),
            &mut dw,
        );
        sink.add(weight, dw);
    }
    if let Some(b) = bias.filter(|&b| sink.wants(b)) {
        let db = dmat
            .chunks_exact(np)
            .map(|row| row.iter().copied().sum())
            .collect();
        sink.add(b, db);
    }
    if sink.wants(input) {
        let mut dcols = vec![T::zero(); g.kdim() * np];
        gemm(
            T::one(),
            MatRef::row_major(tape.value(weight).data(), g.cout, g.kdim()).t(),
            MatRef::row_major(&dmat, g.cout, np),
            T::zero(),
            &mut dcols,
        );
        sink.add(input, col2im(&dcols, g));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_over_ones_sums_to_nine() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full([1, 1, 3, 3], 1.0));
        let w = tape.constant(Tensor::full([1, 1, 3, 3], 1.0));
        let b = tape.constant(Tensor::zeros([1]));
        let y = tape
            .conv2d(x, w, Some(b), Conv2dOptions::default())
            .unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
        assert_eq!(tape.value(y).data(), &[9.0]);
    }

    #[test]
    fn zero_weight_yields_bias() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn([2, 2, 4, 4], |i| i as f64 * 0.1));
        let w = tape.constant(Tensor::zeros([3, 2, 3, 3]));
        let b = tape.constant(Tensor::new([3], vec![0.5, -1.0, 2.0]).unwrap());
        let y = tape
            .conv2d(
                x,
                w,
                Some(b),
                Conv2dOptions {
                    stride: 1,
                    padding: 1,
                },
            )
            .unwrap();
        assert_eq!(tape.shape(y), &[2, 3, 4, 4]);
        for (i, v) in tape.value(y).data().iter().enumerate() {
            let co = (i / 16) % 3;
            assert_eq!(*v, [0.5, -1.0, 2.0][co]);
        }
    }

    #[test]
    fn output_extent_follows_closed_form() {
        for (h, k, s, p) in [
            (7usize, 3usize, 2usize, 1usize),
            (10, 3, 1, 1),
            (5, 1, 2, 0),
            (8, 7, 2, 3),
            (3, 3, 3, 0),
        ] {
            let mut tape = Tape::<f64>::new();
            let x = tape.constant(Tensor::zeros([1, 1, h, h]));
            let w = tape.constant(Tensor::zeros([1, 1, k, k]));
            let y = tape
                .conv2d(
                    x,
                    w,
                    None,
                    Conv2dOptions {
                        stride: s,
                        padding: p,
                    },
                )
                .unwrap();
            let o = (h + 2 * p - k) / s + 1;
            assert_eq!(tape.shape(y), &[1, 1, o, o]);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros([1, 2, 2, 2]));
        let w = tape.constant(Tensor::zeros([1, 2, 3, 3]));
        assert!(tape.conv2d(x, w, None, Conv2dOptions::default()).is_err());
        assert!(tape
            .conv2d(
                x,
                w,
                None,
                Conv2dOptions {
                    stride: 0,
                    padding: 1
                }
            )
            .is_err());
        let w_bad = tape.constant(Tensor::zeros([1, 3, 1, 1]));
        assert!(tape
            .conv2d(x, w_bad, None, Conv2dOptions::default())
            .is_err());
    }

    fn geometries() -> Vec<ConvGeometry> {
        let mut out = Vec::new();
        for (h, w, k, stride, pad) in [
            (5, 5, 3, 1, 1),
            (6, 4, 3, 2, 1),
            (7, 7, 1, 2, 0),
            (8, 5, 7, 2, 3),
            (4, 4, 3, 3, 2),
            (3, 6, 2, 1, 0),
        ] {
            let (oh, ow) = (
                window_extent(h, k, stride, pad).unwrap(),
                window_extent(w, k, stride, pad).unwrap(),
            );
            out.push(ConvGeometry {
                n: 2,
                cin: 3,
                h,
                w,
                cout: 1,
                kh: k,
                kw: k,
                stride,
                pad,
                oh,
                ow,
            });
        }
        out
    }

    fn direct_im2col(x: &[f64], g: &ConvGeometry) -> Vec<f64> {
        let (np, plane) = (g.columns(), g.plane());
        let mut cols = vec![0.0; g.kdim() * np];
        for ci in 0..g.cin {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    for b in 0..g.n {
                        for oy in 0..g.oh {
                            for ox in 0..g.ow {
                                let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                    continue;
                                }
                                let row = (ci * g.kh + ki) * g.kw + kj;
                                cols[row * np + b * plane + oy * g.ow + ox] =
                                    x[((b * g.cin + ci) * g.h + iy as usize) * g.w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    #[test]
    fn im2col_matches_direct_indexing_and_col2im_is_its_adjoint() {
        for g in geometries() {
            let x: Vec<f64> = (0..g.n * g.cin * g.h * g.w)
                .map(|i| (i as f64 * 0.37).sin())
                .collect();
            assert_eq!(im2col(&x, &g), direct_im2col(&x, &g), "{g:?}");
            // <im2col(x), c> == <x, col2im(c)>
            let c: Vec<f64> = (0..g.kdim() * g.columns())
                .map(|i| (i as f64 * 0.11).cos())
                .collect();
            let lhs: f64 = im2col(&x, &g).iter().zip(&c).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(col2im(&c, &g)).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9, "{g:?}: {lhs} vs {rhs}");
        }
    }
}
