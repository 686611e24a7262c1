//! RA-mean location estimator and the entrywise robust second-moment matrix.
//!
//! The RA-mean solves `Σ ψ[α(y_i − θ)] = 0` with `ψ` the Huber clip. With
//! `α = √(log(1/δ)/(n v²))` and `v ≥ σ`, the estimate lies within
//! `4v√(log(1/δ)/n)` of the mean with probability at least `1 − 2δ`,
//! provided `log(1/δ)/n ≤ 1/8`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Robustification parameter of the RA-mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanAlpha {
    /// Calibrate from `(n, δ, v)`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaMeanConfig {
    pub alpha: MeanAlpha,
    pub delta: f64,
    pub v: f64,
    /// Bisection tolerance; `None` selects `1e-10·(1 + range)`.
    pub root_tol: Option<f64>,
}

impl Default for RaMeanConfig {
    fn default() -> Self {
        RaMeanConfig {
            alpha: MeanAlpha::Auto,
            delta: 0.05,
            v: 1.0,
            root_tol: None,
        }
    }
}

/// Calibrated `α` with the matching deviation radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaChoice {
    pub alpha: f64,
    /// `4v√(log(1/δ)/n)`.
    pub radius: f64,
    /// Whether `log(1/δ)/n ≤ 1/8`, under which the radius is guaranteed.
    pub applicable: bool,
}

/// Smallest `n` with `log(1/δ)/n ≤ 1/8`.
pub fn min_sample_size(delta: f64) -> usize {
    (8.0 * (1.0 / delta).ln()).ceil().max(1.0) as usize
}

/// `α = √(log(1/δ)/(n v²))` together with the bound radius and its
/// applicability predicate.
pub fn choose_alpha(n: usize, delta: f64, v: f64) -> Result<AlphaChoice> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    if n == 0 {
        return invalid("need at least one sample");
    }
    if !(v.is_finite() && v > 0.0) {
        return invalid(format!("v must be finite and positive, got {v}"));
    }
    let ratio = (1.0 / delta).ln() / n as f64;
    Ok(AlphaChoice {
        alpha: (ratio / (v * v)).sqrt(),
        radius: 4.0 * v * ratio.sqrt(),
        applicable: ratio <= 0.125,
    })
}

/// `(1/(αn)) Σ ψ[α(y_i − θ)]`, non-increasing in `θ`.
pub fn influence_sum(samples: ArrayView1<f64>, alpha: f64, theta: f64) -> f64 {
    let s: f64 = samples.iter().map(|&y| (alpha * (y - theta)).clamp(-1.0, 1.0)).sum();
    s / (alpha * samples.len() as f64)
}

/// RA-mean with `α` resolved from `cfg`.
pub fn ra_mean(samples: ArrayView1<f64>, cfg: &RaMeanConfig) -> Result<f64> {
    let alpha = match cfg.alpha {
        MeanAlpha::Fixed(a) => a,
        MeanAlpha::Auto => choose_alpha(samples.len(), cfg.delta, cfg.v)?.alpha,
    };
    ra_mean_with_alpha(samples, alpha, cfg.root_tol)
}

/// RA-mean for a given `alpha`.
///
/// Bisects `θ ↦ Σψ[α(y_i − θ)]` on `[min − 1/α, max + 1/α]` for both ends
/// of the root set and returns their midpoint, clamped to the sample range.
pub fn ra_mean_with_alpha(samples: ArrayView1<f64>, alpha: f64, root_tol: Option<f64>) -> Result<f64> {
    if samples.is_empty() {
        return invalid("RA-mean of an empty sample");
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return invalid("samples must be finite");
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return invalid(format!("alpha must be finite and positive, got {alpha}"));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi {
        return Ok(lo);
    }
    let tol = match root_tol {
        Some(t) if t > 0.0 => t,
        Some(t) => return invalid(format!("root tolerance must be positive, got {t}")),
        None => 1e-10 * (1.0 + (hi - lo)),
    };
    let r = |theta: f64| -> f64 {
        samples
            .iter()
            .map(|&y| (alpha * (y - theta)).clamp(-1.0, 1.0))
            .sum::<f64>()
    };
    let a = lo - 1.0 / alpha;
    let b = hi + 1.0 / alpha;

    // left end: first θ with r(θ) ≤ 0
    let (mut l, mut h) = (a, b);
    while h - l > tol {
        let m = 0.5 * (l + h);
        if m <= l || m >= h {
            break;
        }
        if r(m) > 0.0 {
            l = m;
        } else {
            h = m;
        }
    }
    let left = 0.5 * (l + h);

    // right end: last θ with r(θ) ≥ 0
    let (mut l, mut h) = (a, b);
    while h - l > tol {
        let m = 0.5 * (l + h);
        if m <= l || m >= h {
            break;
        }
        if r(m) >= 0.0 {
            l = m;
        } else {
            h = m;
        }
    }
    let right = 0.5 * (l + h);

    Ok((0.5 * (left + right)).clamp(lo, hi))
}

/// Entrywise robust estimate of the second-moment matrix `E X_i X_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustCovariance {
    pub sigma_hat: Array2<f64>,
    pub delta_used: f64,
    /// Dispersion bound used for each entry.
    pub v_used: Array2<f64>,
    /// Deviation radius `4v√(log(1/δ)/n)` of each entry.
    pub radius: Array2<f64>,
}

/// `σ̂_ij` = RA-mean of `{X_ki X_kj}_k`, once per unordered pair.
///
/// `delta = None` uses `δ = p⁻³` (with `p` floored at 2), and `v = None`
/// uses the per-pair sample standard deviation of the products, floored at
/// `1e-12`. Pairs are computed in parallel; each writes its own entries.
pub fn robust_covariance(x: ArrayView2<f64>, delta: Option<f64>, v: Option<f64>) -> Result<RobustCovariance> {
    let (n, p) = x.dim();
    if n < 2 {
        return invalid(format!("robust covariance needs n >= 2, got {n}"));
    }
    if p == 0 {
        return Err(Error::Shape("no columns".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("data must be finite");
    }
    let delta = delta.unwrap_or_else(|| (p.max(2) as f64).powi(-3));
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    if let Some(v) = v {
        if !(v.is_finite() && v > 0.0) {
            return invalid(format!("v must be finite and positive, got {v}"));
        }
    }
    let ratio = (1.0 / delta).ln() / n as f64;
    if ratio > 0.125 {
        return Err(Error::Calibration {
            ratio,
            required_n: min_sample_size(delta),
        });
    }

    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect();
    let entries: Vec<(f64, f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let prod = &x.column(i) * &x.column(j);
            let v_ij = match v {
                Some(v) => v,
                None => crate::stats::sample_sd(prod.as_slice().expect("contiguous")).max(1e-12),
            };
            let choice = choose_alpha(n, delta, v_ij)?;
            let est = ra_mean_with_alpha(prod.view(), choice.alpha, None)?;
            Ok((est, v_ij, choice.radius))
        })
        .collect::<Result<_>>()?;

    let mut sigma_hat = Array2::zeros((p, p));
    let mut v_used = Array2::zeros((p, p));
    let mut radius = Array2::zeros((p, p));
    for (&(i, j), &(est, v_ij, rad)) in pairs.iter().zip(entries.iter()) {
        for (a, b) in [(i, j), (j, i)] {
            sigma_hat[[a, b]] = est;
            v_used[[a, b]] = v_ij;
            radius[[a, b]] = rad;
        }
    }
    Ok(RobustCovariance {
        sigma_hat,
        delta_used: delta,
        v_used,
        radius,
    })
}
