//! Penalized regression estimators, the support-restricted oracle and the
//! cross-validated noise-variance estimator.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loss::LossSpec;
use crate::optimizer::{composite_gradient_descent, FitConfig, FitResult};
use crate::rng::{stream_rng, Stream};

/// Smoothing half-width of the LAD surrogate used for R-Lasso, relative to
/// the standard deviation of the response.
pub const R_LASSO_DELTA: f64 = 1e-2;

/// Design matrix (rows are observations) and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 || p == 0 {
            return Err(Error::Shape(format!("dataset needs n >= 1 and p >= 1, got {n}x{p}")));
        }
        if y.len() != n {
            return Err(Error::Shape(format!("X has {n} rows but y has length {}", y.len())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return invalid("dataset contains non-finite values");
        }
        Ok(Dataset { x, y })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `idx`, in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: self.y.select(Axis(0), idx),
        }
    }
}

/// RA-Lasso: RA-quadratic loss with robustification `alpha` plus `lambda‖β‖₁`.
pub fn fit_ra_lasso(data: &Dataset, alpha: f64, lambda: f64, cfg: &FitConfig) -> Result<FitResult> {
    let spec = LossSpec::ra_quadratic(alpha)?;
    composite_gradient_descent(&spec, data.x(), data.y(), &cfg.with_lambda(lambda))
}

/// Lasso: squared loss plus `lambda‖β‖₁`.
pub fn fit_lasso(data: &Dataset, lambda: f64, cfg: &FitConfig) -> Result<FitResult> {
    composite_gradient_descent(&LossSpec::square(), data.x(), data.y(), &cfg.with_lambda(lambda))
}

/// R-Lasso, realized as smoothed LAD with half-width
/// [`R_LASSO_DELTA`]` · sd(y)` plus `lambda‖β‖₁`.
pub fn fit_r_lasso(data: &Dataset, lambda: f64, cfg: &FitConfig) -> Result<FitResult> {
    composite_gradient_descent(&r_lasso_loss(data)?, data.x(), data.y(), &cfg.with_lambda(lambda))
}

/// Loss used by [`fit_r_lasso`] on `data`.
pub fn r_lasso_loss(data: &Dataset) -> Result<LossSpec> {
    let y = data.y();
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let sd = if y.len() > 1 {
        (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    LossSpec::smoothed_lad(R_LASSO_DELTA * scale)
}

/// Catoni-Lasso: Catoni loss with parameter `alpha` plus `lambda‖β‖₁`.
pub fn fit_catoni_lasso(data: &Dataset, alpha: f64, lambda: f64, cfg: &FitConfig) -> Result<FitResult> {
    let spec = LossSpec::catoni(alpha)?;
    composite_gradient_descent(&spec, data.x(), data.y(), &cfg.with_lambda(lambda))
}

/// Least squares restricted to the columns in `support`; zeros elsewhere.
///
/// Solves the normal equations by Cholesky factorization of the restricted
/// Gram matrix.
pub fn fit_oracle(data: &Dataset, support: &[usize]) -> Result<Array1<f64>> {
    let p = data.p();
    if let Some(&j) = support.iter().find(|&&j| j >= p) {
        return invalid(format!("support index {j} out of range for p = {p}"));
    }
    let mut cols = support.to_vec();
    cols.sort_unstable();
    cols.dedup();
    if cols.len() > data.n() {
        return Err(Error::RankDeficient { support: cols.len() });
    }
    let mut beta = Array1::zeros(p);
    if cols.is_empty() {
        return Ok(beta);
    }
    let xs = data.x.select(Axis(1), &cols);
    let k = cols.len();
    let gram = xs.t().dot(&xs);
    let rhs = xs.t().dot(&data.y);
    let gram = DMatrix::from_fn(k, k, |i, j| gram[[i, j]]);
    let rhs = DVector::from_iterator(k, rhs.iter().copied());
    let chol = gram.cholesky().ok_or(Error::RankDeficient { support: k })?;
    let sol = chol.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient { support: k });
    }
    for (&j, &b) in cols.iter().zip(sol.iter()) {
        beta[j] = b;
    }
    Ok(beta)
}

/// Fitted values `Xβ`.
pub fn predict(beta: ArrayView1<f64>, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if x.ncols() != beta.len() {
        return Err(Error::Shape(format!(
            "X has {} columns but beta has length {}",
            x.ncols(),
            beta.len()
        )));
    }
    Ok(x.dot(&beta))
}

/// Split `0..n` into `k` folds: a seeded shuffle followed by contiguous
/// blocks. The first `n mod k` folds hold one extra observation.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return invalid(format!("need at least 2 folds, got {k}"));
    }
    if k > n {
        return invalid(format!("cannot split {n} observations into {k} folds"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Folds, 0));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// Indices outside fold `f`, in increasing order.
pub(crate) fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut held = vec![false; n];
    for &i in fold {
        held[i] = true;
    }
    (0..n).filter(|&i| !held[i]).collect()
}

/// Cross-validated estimate of `σ² = E ε²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub sigma2_hat: f64,
    pub folds: usize,
    /// Mean squared held-out residual of each fold.
    pub per_fold: Vec<f64>,
}

/// `σ̂² = (1/K) Σ_k (1/m_k) Σ_{i ∈ fold k} (y_i − x_iᵀβ̂⁽⁻ᵏ⁾)²`, where
/// `β̂⁽⁻ᵏ⁾` is returned by `fitter` on the observations outside fold `k`.
///
/// Folds are fitted in parallel on the current rayon pool and combined by
/// fold index.
pub fn estimate_sigma2_cv<F>(data: &Dataset, k: usize, seed: u64, fitter: F) -> Result<VarianceEstimate>
where
    F: Fn(&Dataset) -> Result<Array1<f64>> + Sync,
{
    let folds = kfold_partition(data.n(), k, seed)?;
    sigma2_from_folds(data, &folds, fitter)
}

/// [`estimate_sigma2_cv`] on an explicit fold list.
pub fn sigma2_from_folds<F>(data: &Dataset, folds: &[Vec<usize>], fitter: F) -> Result<VarianceEstimate>
where
    F: Fn(&Dataset) -> Result<Array1<f64>> + Sync,
{
    let n = data.n();
    let per_fold: Vec<f64> = folds
        .par_iter()
        .map(|fold| {
            if fold.is_empty() {
                return invalid("empty fold");
            }
            let train = data.select(&complement(n, fold));
            let beta = fitter(&train)?;
            let test = data.select(fold);
            let fitted = predict(beta.view(), test.x())?;
            let sse: f64 = test.y().iter().zip(fitted.iter()).map(|(y, f)| (y - f).powi(2)).sum();
            Ok(sse / fold.len() as f64)
        })
        .collect::<Result<_>>()?;
    // summing in sorted order makes the estimate independent of fold order
    let mut sorted = per_fold.clone();
    sorted.sort_by(f64::total_cmp);
    let sigma2_hat = crate::stats::pairwise_sum(&sorted) / sorted.len() as f64;
    Ok(VarianceEstimate {
        sigma2_hat,
        folds: folds.len(),
        per_fold,
    })
}
