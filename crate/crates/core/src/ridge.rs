//! Closed-form ridge regression on the encoded genotype matrix.
//!
//! Matrices are row-major `f64` slices. When `d > n` and `lambda > 0` the
//! system is solved in its `n x n` dual form, which has the same solution as
//! the `d x d` primal one.

use resgene_autodiff::{gemm, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Candidate penalties searched by [`select_lambda`], in tie-break order.
pub const LAMBDA_GRID: [f64; 5] = [0.1, 1.0, 10.0, 100.0, 1000.0];

/// Pivots below this fraction of the largest diagonal entry count as zero.
const SINGULAR_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

/// Row-major design matrix view.
#[derive(Clone, Copy, Debug)]
pub struct Design<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
}

impl<'a> Design<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Ridge(format!(
                "{} values for a {rows} x {cols} matrix",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// In-place Cholesky of a symmetric positive-definite `m x m` matrix; the
/// lower triangle receives `L`.
fn cholesky(a: &mut [f64], m: usize) -> Result<()> {
    let scale = (0..m).map(|i| a[i * m + i].abs()).fold(0.0, f64::max);
    let tol = SINGULAR_RTOL * scale.max(f64::MIN_POSITIVE);
    for j in 0..m {
        let mut diag = a[j * m + j];
        for k in 0..j {
            diag -= a[j * m + k] * a[j * m + k];
        }
        if !diag.is_finite() || diag <= tol {
            return Err(Error::Ridge(format!(
                "system is singular (pivot {j} is {diag:e})"
            )));
        }
        let ljj = diag.sqrt();
        a[j * m + j] = ljj;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / ljj;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` given the factor from [`cholesky`].
fn cholesky_solve(l: &[f64], m: usize, b: &mut [f64]) {
    for i in 0..m {
        let s: f64 = (0..i).map(|k| l[i * m + k] * b[k]).sum();
        b[i] = (b[i] - s) / l[i * m + i];
    }
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|k| l[k * m + i] * b[k]).sum();
        b[i] = (b[i] - s) / l[i * m + i];
    }
}

/// Fits `w = (X^T X + lambda I)^-1 X^T y`. With `fit_intercept`, `X` and `y`
/// are centred first and the intercept is `mean(y) - mean(X) . w`.
pub fn fit_ridge(x: Design<'_>, y: &[f64], lambda: f64, fit_intercept: bool) -> Result<RidgeModel> {
    let (n, d) = (x.rows, x.cols);
    if n == 0 || d == 0 {
        return Err(Error::Ridge("empty design matrix".into()));
    }
    if y.len() != n {
        return Err(Error::Ridge(format!("{} targets for {n} rows", y.len())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Ridge(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }

    let (x_mean, y_mean) = if fit_intercept {
        let mut xm = vec![0.0; d];
        for i in 0..n {
            xm.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v);
        }
        xm.iter_mut().for_each(|m| *m /= n as f64);
        (xm, y.iter().sum::<f64>() / n as f64)
    } else {
        (vec![0.0; d], 0.0)
    };
    let mut xc = x.data.to_vec();
    for row in xc.chunks_exact_mut(d) {
        row.iter_mut().zip(&x_mean).for_each(|(v, m)| *v -= m);
    }
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let xm = MatRef::row_major(&xc, n, d);

    let weights = if lambda > 0.0 && d > n {
        let mut k = vec![0.0; n * n];
        gemm(1.0, xm, xm.t(), 0.0, &mut k);
        (0..n).for_each(|i| k[i * n + i] += lambda);
        cholesky(&mut k, n)?;
        let mut alpha = yc;
        cholesky_solve(&k, n, &mut alpha);
        let mut w = vec![0.0; d];
        gemm(1.0, xm.t(), MatRef::row_major(&alpha, n, 1), 0.0, &mut w);
        w
    } else {
        let mut g = vec![0.0; d * d];
        gemm(1.0, xm.t(), xm, 0.0, &mut g);
        (0..d).for_each(|i| g[i * d + i] += lambda);
        cholesky(&mut g, d)?;
        let mut w = vec![0.0; d];
        gemm(1.0, xm.t(), MatRef::row_major(&yc, n, 1), 0.0, &mut w);
        cholesky_solve(&g, d, &mut w);
        w
    };
    let intercept = y_mean - x_mean.iter().zip(&weights).map(|(m, w)| m * w).sum::<f64>();
    Ok(RidgeModel {
        weights,
        intercept,
        lambda,
    })
}

impl RidgeModel {
    pub fn predict(&self, x: Design<'_>) -> Result<Vec<f64>> {
        if x.cols != self.weights.len() {
            return Err(Error::Ridge(format!(
                "model has {} weights, input has {} columns",
                self.weights.len(),
                x.cols
            )));
        }
        Ok((0..x.rows)
            .map(|i| {
                self.intercept
                    + x.row(i)
                        .iter()
                        .zip(&self.weights)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// Inner-CV mean squared error per grid entry, in grid order.
    pub cv_mse: Vec<f64>,
}

/// Picks the penalty with the lowest inner k-fold MSE. Ties go to the
/// earlier grid entry; a grid entry whose system is singular scores infinity.
pub fn select_lambda(
    x: Design<'_>,
    y: &[f64],
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<LambdaSelection> {
    if grid.is_empty() {
        return Err(Error::Ridge("empty lambda grid".into()));
    }
    let splits = stats::kfold_split(x.rows, folds.min(x.rows), seed)?;
    let mut cv_mse = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut sse = 0.0;
        let mut failed = false;
        for held in &splits {
            let (train, test) = partition(x, y, held);
            match fit_ridge(train.design(x.cols)?, &train.y, lambda, true) {
                Ok(model) => {
                    let pred = model.predict(test.design(x.cols)?)?;
                    sse += pred
                        .iter()
                        .zip(&test.y)
                        .map(|(p, t)| (p - t).powi(2))
                        .sum::<f64>();
                }
                Err(Error::Ridge(_)) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        cv_mse.push(if failed {
            f64::INFINITY
        } else {
            sse / x.rows as f64
        });
    }
    let best = cv_mse
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v < cv_mse[best] { i } else { best });
    if !cv_mse[best].is_finite() {
        return Err(Error::Ridge(
            "every lambda in the grid gave a singular system".into(),
        ));
    }
    Ok(LambdaSelection {
        lambda: grid[best],
        cv_mse,
    })
}

struct Owned {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Owned {
    fn design(&self, cols: usize) -> Result<Design<'_>> {
        Design::new(&self.x, self.y.len(), cols)
    }
}

fn partition(x: Design<'_>, y: &[f64], held: &[usize]) -> (Owned, Owned) {
    let mut is_held = vec![false; x.rows];
    held.iter().for_each(|&i| is_held[i] = true);
    let mut train = Owned {
        x: Vec::new(),
        y: Vec::new(),
    };
    let mut test = Owned {
        x: Vec::new(),
        y: Vec::new(),
    };
    for i in 0..x.rows {
        let dst = if is_held[i] { &mut test } else { &mut train };
        dst.x.extend_from_slice(x.row(i));
        dst.y.push(y[i]);
    }
    (train, test)
}
