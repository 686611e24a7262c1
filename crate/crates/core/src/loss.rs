//! Scalar loss families, their derivatives and influence functions.
//!
//! Every family is even in the residual, zero at zero and convex:
//!
//! ```text
//! Square            x²
//! RaQuadratic(α)    x²                  |x| ≤ 1/α
//!                   2|x|/α − 1/α²       |x| > 1/α
//! Catoni(α)         (2/α) ∫₀ˣ ψ_c(αt) dt
//! SmoothedLad(δ)    x²/(2δ)             |x| ≤ δ
//!                   |x| − δ/2           |x| > δ
//! ```
//!
//! The empirical versions average over the residuals `r_i = y_i − x_iᵀβ`.

use std::f64::consts::{FRAC_PI_2, LN_2};

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Family tag of a [`LossSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Square,
    RaQuadratic,
    Catoni,
    SmoothedLad,
}

/// A loss family together with its shape parameter.
///
/// `alpha` is the robustification parameter for `RaQuadratic` and `Catoni`
/// and the smoothing half-width for `SmoothedLad`. It is ignored by `Square`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    kind: LossKind,
    alpha: f64,
}

impl LossSpec {
    pub fn square() -> Self {
        LossSpec {
            kind: LossKind::Square,
            alpha: 0.0,
        }
    }

    pub fn ra_quadratic(alpha: f64) -> Result<Self> {
        Self::new(LossKind::RaQuadratic, alpha)
    }

    pub fn catoni(alpha: f64) -> Result<Self> {
        Self::new(LossKind::Catoni, alpha)
    }

    pub fn smoothed_lad(delta: f64) -> Result<Self> {
        Self::new(LossKind::SmoothedLad, delta)
    }

    pub fn new(kind: LossKind, alpha: f64) -> Result<Self> {
        if kind != LossKind::Square && !(alpha.is_finite() && alpha > 0.0) {
            return invalid(format!("{kind:?} loss needs a finite positive parameter, got {alpha}"));
        }
        Ok(LossSpec { kind, alpha })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Upper bound on the second derivative of the loss in the residual.
    ///
    /// Square, RA-quadratic and Catoni are all bounded by 2; the smoothed LAD
    /// has curvature `1/δ` inside its quadratic zone.
    pub fn curvature_bound(&self) -> f64 {
        match self.kind {
            LossKind::SmoothedLad => (1.0 / self.alpha).max(2.0),
            _ => 2.0,
        }
    }

    /// Loss at residual `x`. Caller guarantees `x` is finite.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            LossKind::Square => x * x,
            LossKind::RaQuadratic => huber_unchecked(x, self.alpha),
            LossKind::Catoni => catoni_value_unchecked(x, self.alpha),
            LossKind::SmoothedLad => {
                let a = x.abs();
                if a <= self.alpha {
                    x * x / (2.0 * self.alpha)
                } else {
                    a - self.alpha / 2.0
                }
            }
        }
    }

    /// Derivative of [`LossSpec::value`] in the residual.
    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match self.kind {
            LossKind::Square => 2.0 * x,
            LossKind::RaQuadratic => {
                let knot = 1.0 / self.alpha;
                if x.abs() <= knot {
                    2.0 * x
                } else {
                    2.0 * knot * x.signum()
                }
            }
            LossKind::Catoni => 2.0 / self.alpha * catoni_psi_unchecked(self.alpha * x),
            LossKind::SmoothedLad => {
                if x.abs() <= self.alpha {
                    x / self.alpha
                } else {
                    x.signum()
                }
            }
        }
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be finite, got {x}"))
    }
}

#[inline]
fn huber_unchecked(x: f64, alpha: f64) -> f64 {
    let a = x.abs();
    let knot = 1.0 / alpha;
    if a <= knot {
        x * x
    } else {
        2.0 * a * knot - knot * knot
    }
}

/// RA-quadratic (Huber) loss: `x²` on `|x| ≤ 1/α`, `2|x|/α − 1/α²` beyond.
pub fn huber_value(x: f64, alpha: f64) -> Result<f64> {
    check_finite("x", x)?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return invalid(format!("alpha must be finite and positive, got {alpha}"));
    }
    Ok(huber_unchecked(x, alpha))
}

/// Huber influence function: `x` clipped to `[-1, 1]`.
pub fn huber_psi(x: f64) -> Result<f64> {
    check_finite("x", x)?;
    Ok(x.clamp(-1.0, 1.0))
}

#[inline]
fn catoni_psi_unchecked(t: f64) -> f64 {
    let a = t.abs();
    let mag = if a < 1.0 { -(-a + 0.5 * a * a).ln_1p() } else { LN_2 };
    mag.copysign(t)
}

/// Catoni's influence function
/// `sgn(t)·{−log(1 − |t| + t²/2) on |t| < 1, log 2 otherwise}`.
pub fn catoni_psi(t: f64) -> Result<f64> {
    check_finite("t", t)?;
    Ok(catoni_psi_unchecked(t))
}

/// `∫₀ˢ ψ_c(u) du` for `s ≥ 0`.
fn catoni_primitive(s: f64) -> f64 {
    if s < 1e-2 {
        // Taylor series; the closed form below cancels badly near zero.
        let s2 = s * s;
        let s4 = s2 * s2;
        return s2 / 2.0 - s4 / 24.0 - s4 * s / 40.0 - s4 * s2 / 120.0 + s4 * s4 / 448.0 + s4 * s4 * s / 576.0;
    }
    let head = |u: f64| {
        // antiderivative of log(u²/2 − u + 1)
        let w = u - 1.0;
        w * (w * w).ln_1p() - 2.0 * w + 2.0 * w.atan() - u * LN_2
    };
    let g0 = -LN_2 + 2.0 - FRAC_PI_2;
    if s < 1.0 {
        -(head(s) - g0)
    } else {
        -(head(1.0) - g0) + LN_2 * (s - 1.0)
    }
}

#[inline]
fn catoni_value_unchecked(x: f64, alpha: f64) -> f64 {
    2.0 / (alpha * alpha) * catoni_primitive((alpha * x).abs())
}

/// Loss value of the family `spec` at residual `x`.
pub fn loss_value(spec: &LossSpec, x: f64) -> Result<f64> {
    check_finite("x", x)?;
    Ok(spec.value(x))
}

/// Derivative of the loss of family `spec` at residual `x`.
///
/// At exactly `|x| = 1/α` the RA-quadratic derivative takes the quadratic
/// branch value `2x`; both branches agree there.
pub fn loss_deriv(spec: &LossSpec, x: f64) -> Result<f64> {
    check_finite("x", x)?;
    Ok(spec.deriv(x))
}

pub(crate) fn check_design(x: &ArrayView2<f64>, y: &ArrayView1<f64>, beta: &ArrayView1<f64>) -> Result<()> {
    let (n, p) = x.dim();
    if n != y.len() {
        return Err(Error::Shape(format!("X has {n} rows but y has length {}", y.len())));
    }
    if p != beta.len() {
        return Err(Error::Shape(format!(
            "X has {p} columns but beta has length {}",
            beta.len()
        )));
    }
    if n == 0 {
        return Err(Error::Shape("no observations".into()));
    }
    Ok(())
}

/// Residuals `y − Xβ`.
pub fn residuals(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_design(&x, &y, &beta)?;
    Ok(&y - &x.dot(&beta))
}

/// `(1/n) Σ ℓ(y_i − x_iᵀβ)`.
pub fn empirical_loss(spec: &LossSpec, x: ArrayView2<f64>, y: ArrayView1<f64>, beta: ArrayView1<f64>) -> Result<f64> {
    let r = residuals(x, y, beta)?;
    Ok(mean_loss(spec, r.view()))
}

pub(crate) fn mean_loss(spec: &LossSpec, r: ArrayView1<f64>) -> f64 {
    r.iter().map(|&ri| spec.value(ri)).sum::<f64>() / r.len() as f64
}

/// Gradient of [`empirical_loss`] in `β`: `−(1/n) Σ ℓ'(r_i) x_i`.
pub fn empirical_gradient(
    spec: &LossSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    beta: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let r = residuals(x, y, beta)?;
    let n = r.len() as f64;
    let d = r.mapv(|ri| spec.deriv(ri));
    Ok(x.t().dot(&d) * (-1.0 / n))
}
