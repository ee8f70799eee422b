use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reviewlens_core::linreg::{
    cv_error, lasso, lasso_path, log_grid, ols, soft_threshold, Estimator, LassoOptions, LassoProblem,
};

fn data(seed: u64, n: usize, p: usize, noise: f64) -> (DMatrix<f64>, Vec<f64>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, j| r.random_range(-1.0..1.0) * (j + 1) as f64);
    let beta: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { 1.0 / (j + 1) as f64 } else { 0.0 }).collect();
    let y = (0..n)
        .map(|i| 0.5 + (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + noise * r.random_range(-1.0..1.0))
        .collect();
    (x, y)
}

/// Gaussian elimination with partial pivoting on the augmented normal equations.
fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let (n, p) = x.shape();
    let q = p + 1;
    let col = |i: usize, j: usize| if j == 0 { 1.0 } else { x[(i, j - 1)] };
    let mut a = vec![vec![0.0; q + 1]; q];
    for r in 0..q {
        for c in 0..q {
            a[r][c] = (0..n).map(|i| col(i, r) * col(i, c)).sum();
        }
        a[r][q] = (0..n).map(|i| col(i, r) * y[i]).sum();
    }
    for k in 0..q {
        let piv = (k..q).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, piv);
        for i in k + 1..q {
            let f = a[i][k] / a[k][k];
            for j in k..=q {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    let mut b = vec![0.0; q];
    for k in (0..q).rev() {
        b[k] = (a[k][q] - (k + 1..q).map(|j| a[k][j] * b[j]).sum::<f64>()) / a[k][k];
    }
    b
}

#[test]
fn ols_matches_normal_equations() {
    for seed in 0..10 {
        let (x, y) = data(seed, 50, 3, 0.3);
        let fit = ols(&x, &y).unwrap();
        let oracle = normal_equations(&x, &y);
        assert!((fit.intercept - oracle[0]).abs() < 1e-8);
        for (a, b) in fit.coefficients.iter().zip(&oracle[1..]) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn unpenalised_lasso_is_ols() {
    for seed in 0..10 {
        let (x, y) = data(seed, 80, 4, 0.2);
        let a = ols(&x, &y).unwrap();
        let b = lasso(&x, &y, 0.0).unwrap();
        assert!((a.intercept - b.intercept).abs() < 1e-6);
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((u - v).abs() < 1e-6, "seed {seed}: {u} vs {v}");
        }
    }
}

#[test]
fn lambda_max_zeroes_everything() {
    let (x, y) = data(3, 60, 5, 0.5);
    let lmax = LassoProblem::new(&x, &y).unwrap().lambda_max();
    for l in [lmax, lmax * 1.5, lmax * 100.0] {
        let fit = lasso(&x, &y, l).unwrap();
        assert!(fit.coefficients.iter().all(|c| *c == 0.0));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((fit.intercept - mean).abs() < 1e-12);
    }
    let just_below = lasso(&x, &y, lmax * 0.99).unwrap();
    assert!(just_below.nonzero() >= 1);
}

#[test]
fn objective_never_increases() {
    for seed in 0..5 {
        let (x, y) = data(seed, 100, 6, 0.4);
        let prob = LassoProblem::new(&x, &y).unwrap();
        for frac in [0.0, 0.01, 0.1, 0.5] {
            let mut trace = Vec::new();
            prob.solve(prob.lambda_max() * frac, None, &LassoOptions::default(), |_, o| trace.push(o)).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "objective rose {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn sweep_cap_reports_non_convergence() {
    let (x, y) = data(1, 50, 4, 0.1);
    let prob = LassoProblem::new(&x, &y).unwrap();
    let err = prob.solve(0.0, None, &LassoOptions { tol: 0.0, max_sweeps: 3 }, |_, _| {}).unwrap_err();
    assert!(err.to_string().contains("3 sweeps"), "{err}");
}

#[test]
fn path_support_grows() {
    let (x, y) = data(2, 120, 8, 0.3);
    let lmax = LassoProblem::new(&x, &y).unwrap().lambda_max();
    let fits = lasso_path(&x, &y, &log_grid(lmax, 1e-3, 30)).unwrap();
    assert_eq!(fits[0].nonzero(), 0);
    assert!(fits.last().unwrap().nonzero() >= 4);
    // Support size is not strictly monotone in general; the ends are.
    assert!(fits.iter().all(|f| f.coefficients.iter().all(|c| c.is_finite())));
}

#[test]
fn noise_predictors_do_no_better_than_the_mean() {
    let ratios: Vec<f64> = (0..20)
        .map(|seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed + 100);
            let x = DMatrix::from_fn(200, 3, |_, _| r.random::<f64>());
            let y: Vec<f64> = (0..200).map(|_| r.random_range(1.0..5.0)).collect();
            let rep = cv_error(&x, &y, &Estimator::Ols, 5, seed).unwrap();
            rep.mean_rmse / rep.baseline_sd
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 1.0).abs() < 0.1, "mean ratio {mean}");
}

#[test]
fn lasso_cv_runs_and_reports_lambdas() {
    let (x, y) = data(9, 150, 6, 0.3);
    let rep = cv_error(&x, &y, &Estimator::lasso_default(), 5, 4).unwrap();
    assert_eq!(rep.lambdas.len(), 5);
    assert!(rep.mean_rmse < rep.baseline_sd);
    assert!(rep.lambdas.iter().all(|l| *l > 0.0));
    assert_eq!(rep, cv_error(&x, &y, &Estimator::lasso_default(), 5, 4).unwrap());
}

proptest! {
    #[test]
    fn single_predictor_closed_form(raw in prop::collection::vec(-5.0f64..5.0, 8..40), slope in -2.0f64..2.0, lambda in 0.0f64..1.0, seed in 0u64..1000) {
        let n = raw.len() as f64;
        let m = raw.iter().sum::<f64>() / n;
        let sd = (raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        prop_assume!(sd > 1e-3);
        let z: Vec<f64> = raw.iter().map(|v| (v - m) / sd).collect();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = z.iter().map(|v| slope * v + r.random_range(-1.0..1.0)).collect();
        let ym = y.iter().sum::<f64>() / n;
        let rho: f64 = z.iter().zip(&y).map(|(a, b)| a * (b - ym)).sum::<f64>() / n;
        let fit = lasso(&DMatrix::from_column_slice(z.len(), 1, &z), &y, lambda).unwrap();
        prop_assert!((fit.coefficients[0] - soft_threshold(rho, lambda)).abs() < 1e-10);
    }
}
