use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use resgene_core::ridge::{fit_ridge, select_lambda, Design, LAMBDA_GRID};

/// `(X^T X + lambda I)^-1 X^T y` through nalgebra's LU solver.
fn oracle(x: &[f64], n: usize, d: usize, y: &[f64], lambda: f64) -> Vec<f64> {
    let xm = DMatrix::from_row_slice(n, d, x);
    let a = xm.transpose() * &xm + DMatrix::identity(d, d) * lambda;
    let b = xm.transpose() * DVector::from_column_slice(y);
    a.lu()
        .solve(&b)
        .expect("well posed")
        .iter()
        .copied()
        .collect()
}

fn centred(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for j in 0..d {
        let m = (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64;
        (0..n).for_each(|i| out[i * d + j] -= m);
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

fn problem(n: usize, d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-2.0f64..2.0, n * d),
        prop::collection::vec(-3.0f64..3.0, n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn primal_matches_nalgebra((x, y) in problem(20, 5), lambda in 0.01f64..100.0) {
        let model = fit_ridge(Design::new(&x, 20, 5).unwrap(), &y, lambda, false).unwrap();
        prop_assert!(max_abs_diff(&model.weights, &oracle(&x, 20, 5, &y, lambda)) < 1e-8);
        prop_assert_eq!(model.intercept, 0.0);
    }

    #[test]
    fn intercept_fit_matches_centred_oracle((x, y) in problem(20, 5), lambda in 0.01f64..100.0) {
        let model = fit_ridge(Design::new(&x, 20, 5).unwrap(), &y, lambda, true).unwrap();
        let ym = y.iter().sum::<f64>() / 20.0;
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let w = oracle(&centred(&x, 20, 5), 20, 5, &yc, lambda);
        prop_assert!(max_abs_diff(&model.weights, &w) < 1e-8);
        // Predictions at the column means equal the target mean.
        let xm: Vec<f64> = (0..5).map(|j| (0..20).map(|i| x[i * 5 + j]).sum::<f64>() / 20.0).collect();
        let at_mean = model.predict(Design::new(&xm, 1, 5).unwrap()).unwrap()[0];
        prop_assert!((at_mean - ym).abs() < 1e-9);
    }

    #[test]
    fn dual_route_matches_primal_oracle((x, y) in problem(8, 30), lambda in 0.1f64..50.0) {
        let model = fit_ridge(Design::new(&x, 8, 30).unwrap(), &y, lambda, false).unwrap();
        prop_assert!(max_abs_diff(&model.weights, &oracle(&x, 8, 30, &y, lambda)) < 1e-8);
    }

    #[test]
    fn shrinkage_is_monotone((x, y) in problem(20, 5)) {
        let norms: Vec<f64> = LAMBDA_GRID
            .iter()
            .map(|&l| {
                let w = fit_ridge(Design::new(&x, 20, 5).unwrap(), &y, l, true).unwrap().weights;
                w.iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        prop_assert!(norms.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12)), "{:?}", norms);
    }
}

#[test]
fn exact_linear_signal_is_recovered_without_penalty() {
    let (n, d) = (12, 3);
    let x: Vec<f64> = (0..n * d).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let w = [1.5, -2.0, 0.25];
    let y: Vec<f64> = (0..n)
        .map(|i| 4.0 + (0..d).map(|j| x[i * d + j] * w[j]).sum::<f64>())
        .collect();
    let model = fit_ridge(Design::new(&x, n, d).unwrap(), &y, 0.0, true).unwrap();
    assert!(max_abs_diff(&model.weights, &w) < 1e-10);
    assert!((model.intercept - 4.0).abs() < 1e-10);
}

#[test]
fn lambda_selection_prefers_small_penalty_on_clean_signal() {
    let (n, d) = (40, 4);
    let x: Vec<f64> = (0..n * d)
        .map(|i| ((i * 31 + 7) % 17) as f64 / 4.0)
        .collect();
    let y: Vec<f64> = (0..n).map(|i| x[i * d] - 2.0 * x[i * d + 3]).collect();
    let sel = select_lambda(Design::new(&x, n, d).unwrap(), &y, &LAMBDA_GRID, 5, 9).unwrap();
    assert_eq!(sel.lambda, 0.1);
    assert_eq!(sel.cv_mse.len(), LAMBDA_GRID.len());
}
