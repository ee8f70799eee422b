//! Ordinary least squares and coordinate-descent lasso with k-fold
//! cross-validation and coefficient rankings.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::util::{argsort_desc, mean, rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Population standard deviations; 0 marks a constant column.
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    /// Coefficients on the original scale of each column.
    pub coefficients: Vec<f64>,
    /// Penalty; 0 for OLS.
    pub lambda: f64,
    /// Column standardisation used by the lasso; `None` for OLS.
    pub standardization: Option<Standardization>,
}

impl LinearFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        x.row_iter()
            .map(|r| self.intercept + r.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn nonzero(&self) -> usize {
        self.coefficients.iter().filter(|c| **c != 0.0).count()
    }
}

/// Columns (0-based, "x{j}") that are linear combinations of the intercept
/// and earlier columns, by modified Gram-Schmidt.
fn collinear_columns(x: &DMatrix<f64>) -> Vec<String> {
    let n = x.nrows();
    let mut basis: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())];
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col;
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let residual = v.norm();
        if residual <= 1e-9 * norm.max(1.0) {
            bad.push(format!("x{j}"));
        } else {
            basis.push(v / residual);
        }
    }
    bad
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// Least squares with an intercept. Solves the normal equations by Cholesky,
/// falling back to QR; rank-deficient designs are rejected.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if n <= p {
        return Err(Error::InvalidInput(format!("OLS needs more rows ({n}) than predictors ({p})")));
    }
    let bad = collinear_columns(x);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }
    let xa = with_intercept(x);
    let yv = DVector::from_column_slice(y);
    let xtx = xa.transpose() * &xa;
    let xty = xa.transpose() * &yv;
    let beta = match xtx.cholesky() {
        Some(ch) => ch.solve(&xty),
        None => xa
            .qr()
            .solve(&yv)
            .ok_or_else(|| Error::RankDeficient { columns: vec!["design".into()] })?,
    };
    Ok(LinearFit {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        lambda: 0.0,
        standardization: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Converged when no coefficient moves more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { tol: 1e-7, max_sweeps: 100_000 }
    }
}

/// Standardised problem shared by every lambda on one data set.
pub struct LassoProblem {
    n: usize,
    /// Standardised columns (constant columns left at zero).
    z: Vec<Vec<f64>>,
    yc: Vec<f64>,
    y_mean: f64,
    std: Standardization,
}

impl LassoProblem {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: y.len() });
        }
        if n == 0 {
            return Err(Error::InvalidInput("lasso needs at least one row".into()));
        }
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        let mut z = Vec::with_capacity(p);
        for j in 0..p {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let m = mean(&col);
            let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
            let sd = if sd > 1e-12 * m.abs().max(1.0) { sd } else { 0.0 };
            z.push(if sd > 0.0 { col.iter().map(|v| (v - m) / sd).collect() } else { vec![0.0; n] });
            means.push(m);
            scales.push(sd);
        }
        let y_mean = mean(y);
        Ok(LassoProblem {
            n,
            z,
            yc: y.iter().map(|v| v - y_mean).collect(),
            y_mean,
            std: Standardization { means, scales },
        })
    }

    /// Smallest lambda at which every coefficient is zero.
    pub fn lambda_max(&self) -> f64 {
        self.z
            .iter()
            .map(|zj| (zj.iter().zip(&self.yc).map(|(a, b)| a * b).sum::<f64>() / self.n as f64).abs())
            .fold(0.0, f64::max)
    }

    fn objective(&self, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
        r.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.n as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Cyclic coordinate descent from `start` (standardised coefficients).
    /// `observer` receives the objective after every sweep.
    pub fn solve(
        &self,
        lambda: f64,
        start: Option<&[f64]>,
        options: &LassoOptions,
        mut observer: impl FnMut(usize, f64),
    ) -> Result<(Vec<f64>, usize)> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        let p = self.z.len();
        let n = self.n as f64;
        let mut beta = start.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
        let mut r = self.yc.clone();
        for (zj, &bj) in self.z.iter().zip(&beta) {
            if bj != 0.0 {
                for (ri, zi) in r.iter_mut().zip(zj) {
                    *ri -= zi * bj;
                }
            }
        }
        let mut sweeps = 0;
        loop {
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                if self.std.scales[j] == 0.0 {
                    continue;
                }
                let zj = &self.z[j];
                let rho = zj.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n + beta[j];
                let new = soft_threshold(rho, lambda);
                let delta = new - beta[j];
                if delta != 0.0 {
                    for (ri, zi) in r.iter_mut().zip(zj) {
                        *ri -= zi * delta;
                    }
                    beta[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            sweeps += 1;
            let obj = self.objective(&r, &beta, lambda);
            observer(sweeps, obj);
            if max_change < options.tol {
                return Ok((beta, sweeps));
            }
            if sweeps >= options.max_sweeps {
                return Err(Error::NotConverged { sweeps, max_change, objective: obj });
            }
        }
    }

    /// Maps standardised coefficients back to the original scale.
    pub fn to_fit(&self, beta: &[f64], lambda: f64) -> LinearFit {
        let coefficients: Vec<f64> = beta
            .iter()
            .zip(&self.std.scales)
            .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
            .collect();
        let intercept = self.y_mean - coefficients.iter().zip(&self.std.means).map(|(c, m)| c * m).sum::<f64>();
        LinearFit { intercept, coefficients, lambda, standardization: Some(self.std.clone()) }
    }
}

pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Minimises `(1/2n)||y - X b||^2 + lambda ||b||_1` over standardised X.
pub fn lasso(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LinearFit> {
    let prob = LassoProblem::new(x, y)?;
    let (beta, _) = prob.solve(lambda, None, &LassoOptions::default(), |_, _| {})?;
    Ok(prob.to_fit(&beta, lambda))
}

/// `count` log-spaced values from `hi` down to `hi * ratio`.
pub fn log_grid(hi: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![hi];
    }
    (0..count).map(|i| hi * ratio.powf(i as f64 / (count - 1) as f64)).collect()
}

/// Warm-started fits along decreasing `lambdas`.
pub fn lasso_path(x: &DMatrix<f64>, y: &[f64], lambdas: &[f64]) -> Result<Vec<LinearFit>> {
    let prob = LassoProblem::new(x, y)?;
    let mut warm: Option<Vec<f64>> = None;
    lambdas
        .iter()
        .map(|&l| {
            let (beta, _) = prob.solve(l, warm.as_deref(), &LassoOptions::default(), |_, _| {})?;
            let fit = prob.to_fit(&beta, l);
            warm = Some(beta);
            Ok(fit)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Estimator {
    Ols,
    /// Lambda picked per outer fold by an inner CV over a log grid from
    /// lambda_max down to lambda_max * `ratio`.
    Lasso { grid: usize, ratio: f64, inner_folds: usize },
}

impl Estimator {
    pub fn lasso_default() -> Self {
        Estimator::Lasso { grid: 50, ratio: 1e-3, inner_folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
    /// Sample standard deviation of y.
    pub baseline_sd: f64,
    pub seed: u64,
    /// Fold of each row.
    pub folds: Vec<usize>,
    /// Lambda used in each fold (0 for OLS).
    pub lambdas: Vec<f64>,
    /// Folds whose held-out y has zero variance.
    pub zero_variance_folds: Vec<usize>,
}

/// Shuffled round-robin fold labels: sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed, 0));
    let mut out = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % folds;
    }
    out
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    (pred.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64).sqrt()
}

fn sample_sd(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let m = mean(y);
    (y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (y.len() - 1) as f64).sqrt()
}

/// Lambda with the lowest inner-CV RMSE over a log grid from lambda_max
/// down to lambda_max * `ratio` (ties to the larger lambda).
pub fn select_lambda(x: &DMatrix<f64>, y: &[f64], grid: usize, ratio: f64, inner_folds: usize, seed: u64) -> Result<f64> {
    let lmax = LassoProblem::new(x, y)?.lambda_max();
    if lmax == 0.0 {
        return Ok(0.0);
    }
    let lambdas = log_grid(lmax, ratio, grid);
    let inner = fold_assignment(y.len(), inner_folds.min(y.len()), seed);
    let mut err = vec![0.0; lambdas.len()];
    for f in 0..inner_folds.min(y.len()) {
        let train: Vec<usize> = (0..y.len()).filter(|&i| inner[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| inner[i] == f).collect();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let x_test = rows(x, &test);
        for (e, fit) in err.iter_mut().zip(lasso_path(&rows(x, &train), &y_train, &lambdas)?) {
            *e += rmse(&fit.predict(&x_test), &y_test);
        }
    }
    let best = (0..lambdas.len()).min_by(|&a, &b| err[a].total_cmp(&err[b]).then(a.cmp(&b))).expect("grid non-empty");
    Ok(lambdas[best])
}

/// k-fold cross-validated RMSE of `estimator`.
pub fn cv_error(x: &DMatrix<f64>, y: &[f64], estimator: &Estimator, folds: usize, seed: u64) -> Result<CvReport> {
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.nrows() });
    }
    if folds < 2 || n < folds {
        return Err(Error::InvalidConfig(format!("cross-validation needs 2 <= folds <= n, got {folds} folds for {n} rows")));
    }
    let assignment = fold_assignment(n, folds, seed);
    let results: Vec<Result<(f64, f64, bool)>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let x_train = rows(x, &train);
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            let (fit, lambda) = match *estimator {
                Estimator::Ols => (ols(&x_train, &y_train)?, 0.0),
                Estimator::Lasso { grid, ratio, inner_folds } => {
                    let l = select_lambda(&x_train, &y_train, grid, ratio, inner_folds, seed ^ (f as u64 + 1))?;
                    (lasso(&x_train, &y_train, l)?, l)
                }
            };
            let e = rmse(&fit.predict(&rows(x, &test)), &y_test);
            let flat = y_test.iter().all(|v| *v == y_test[0]);
            Ok((e, lambda, flat))
        })
        .collect();
    let mut fold_rmse = Vec::with_capacity(folds);
    let mut lambdas = Vec::with_capacity(folds);
    let mut zero_variance_folds = Vec::new();
    for (f, r) in results.into_iter().enumerate() {
        let (e, l, flat) = r?;
        fold_rmse.push(e);
        lambdas.push(l);
        if flat {
            log::warn!("fold {f} has a constant held-out target");
            zero_variance_folds.push(f);
        }
    }
    Ok(CvReport {
        mean_rmse: mean(&fold_rmse),
        fold_rmse,
        baseline_sd: sample_sd(y),
        seed,
        folds: assignment,
        lambdas,
        zero_variance_folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPredictor {
    pub feature: usize,
    pub coefficient: f64,
    /// 1-based rank by |coefficient|; `None` for unselected (zero) features.
    pub rank: Option<usize>,
}

/// Features by descending |coefficient|, zero coefficients last and unranked.
pub fn rank_predictors(fit: &LinearFit) -> Vec<RankedPredictor> {
    let abs: Vec<f64> = fit.coefficients.iter().map(|c| c.abs()).collect();
    argsort_desc(&abs)
        .into_iter()
        .enumerate()
        .map(|(i, f)| RankedPredictor {
            feature: f,
            coefficient: fit.coefficients[f],
            rank: (fit.coefficients[f] != 0.0).then_some(i + 1),
        })
        .collect()
}
