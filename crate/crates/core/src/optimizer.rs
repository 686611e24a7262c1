//! Composite gradient descent for `L_n(β) + λ‖β‖₁` subject to `‖β‖₁ ≤ ρ`.
//!
//! Each iteration minimizes the local quadratic approximation
//!
//! ```text
//! L_n(βᵗ) + ∇L_n(βᵗ)ᵀ(β − βᵗ) + (γ_u/2)‖β − βᵗ‖² + λ‖β‖₁   over ‖β‖₁ ≤ ρ
//! ```
//!
//! whose solution is a soft-threshold of the gradient step at `λ/γ_u`,
//! followed by a Euclidean projection onto the L1 ball when the
//! thresholded point lies outside it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loss::{check_design, LossSpec};

/// Relative margin added on top of the power-iteration eigenvalue.
pub const GAMMA_MARGIN: f64 = 0.01;
const POWER_TOL: f64 = 1e-6;
const POWER_MAX_ITERS: usize = 10_000;

/// Curvature of the quadratic majorizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaU {
    /// Resolve from the design: curvature bound of the loss times
    /// `λ_max(XᵀX/n)`, with [`GAMMA_MARGIN`].
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub lambda: f64,
    pub rho: f64,
    pub gamma_u: GammaU,
    pub max_iters: usize,
    pub tol: f64,
    pub beta0: Option<Array1<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: 0.0,
            rho: 1e6,
            gamma_u: GammaU::Auto,
            max_iters: 10_000,
            tol: 1e-10,
            beta0: None,
        }
    }
}

impl FitConfig {
    pub fn with_lambda(&self, lambda: f64) -> Self {
        FitConfig { lambda, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return invalid(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.rho > 0.0) || self.rho.is_nan() {
            return invalid(format!("rho must be > 0, got {}", self.rho));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return invalid(format!("tol must be finite and > 0, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be >= 1");
        }
        if let GammaU::Fixed(g) = self.gamma_u {
            if !(g.is_finite() && g > 0.0) {
                return invalid(format!("gamma_u must be finite and > 0, got {g}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: Array1<f64>,
    /// `φ_n` at the initial point followed by one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The curvature actually used.
    pub gamma_u: f64,
}

/// Componentwise `sign(v_j)·max(|v_j| − τ, 0)`.
pub fn soft_threshold(v: ArrayView1<f64>, tau: f64) -> Result<Array1<f64>> {
    if !(tau >= 0.0) {
        return invalid(format!("threshold must be >= 0, got {tau}"));
    }
    Ok(v.mapv(|x| shrink(x, tau)))
}

#[inline]
fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

fn l1_norm(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Euclidean projection of `v` onto `{β : ‖β‖₁ ≤ ρ}`.
///
/// Points already inside the ball are returned unchanged. Otherwise the
/// magnitudes are sorted in decreasing order `b_1 ≥ … ≥ b_p` and the result
/// is `v` soft-thresholded at `π = (Σ_{r≤J} b_r − ρ)/J`, where `J` is the
/// largest index with `b_J > (Σ_{r≤J} b_r − ρ)/J`.
pub fn project_l1_ball(v: ArrayView1<f64>, rho: f64) -> Result<Array1<f64>> {
    if !(rho > 0.0) {
        return invalid(format!("L1 radius must be > 0, got {rho}"));
    }
    if l1_norm(v) <= rho {
        return Ok(v.to_owned());
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut pi = 0.0;
    for (j, &b) in mags.iter().enumerate() {
        cumsum += b;
        let candidate = (cumsum - rho) / (j + 1) as f64;
        if b - candidate > 0.0 {
            pi = candidate;
        } else {
            break;
        }
    }
    Ok(v.mapv(|x| shrink(x, pi)))
}

/// Largest eigenvalue of `XᵀX/n` by power iteration.
///
/// Starts from a fixed, slightly tilted all-ones vector and stops once the
/// Rayleigh quotient changes by less than `1e-6` relatively.
pub fn gram_spectral_norm(x: ArrayView2<f64>) -> Result<f64> {
    let (n, p) = x.dim();
    if n == 0 || p == 0 {
        return Err(Error::DegenerateDesign("empty design matrix".into()));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateDesign("design matrix is identically zero".into()));
    }
    let nf = n as f64;
    let mut v: Array1<f64> = Array1::from_shape_fn(p, |j| 1.0 + 0.5 * (j as f64) / (p as f64));
    v /= v.dot(&v).sqrt();
    let mut lambda = 0.0f64;
    for _ in 0..POWER_MAX_ITERS {
        let w = x.t().dot(&x.dot(&v)) / nf;
        let next = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            // start vector in the null space; fall back to a coordinate direction
            let j = (0..p)
                .max_by(|&a, &b| {
                    let ca = x.column(a).dot(&x.column(a));
                    let cb = x.column(b).dot(&x.column(b));
                    ca.total_cmp(&cb)
                })
                .unwrap_or(0);
            v.fill(0.0);
            v[j] = 1.0;
            continue;
        }
        let done = (next - lambda).abs() <= POWER_TOL * next.abs();
        lambda = next;
        v = w / norm;
        if done {
            break;
        }
    }
    Ok(lambda)
}

/// `2·λ_max(XᵀX/n)·(1 + margin)`: a step curvature valid for every loss
/// family whose second derivative is at most 2.
pub fn estimate_gamma_u(x: ArrayView2<f64>) -> Result<f64> {
    Ok(2.0 * gram_spectral_norm(x)? * (1.0 + GAMMA_MARGIN))
}

/// Curvature for `spec` on design `x`.
pub fn gamma_u_for(spec: &LossSpec, x: ArrayView2<f64>) -> Result<f64> {
    Ok(spec.curvature_bound() * gram_spectral_norm(x)? * (1.0 + GAMMA_MARGIN))
}

/// One majorize-minimize step: soft-threshold `βᵗ − ∇/γ_u` at `λ/γ_u`, then
/// project onto the L1 ball of radius `ρ` if needed.
pub fn lqa_step(beta_t: ArrayView1<f64>, grad: ArrayView1<f64>, gamma_u: f64, cfg: &FitConfig) -> Result<Array1<f64>> {
    if beta_t.len() != grad.len() {
        return Err(Error::Shape(format!(
            "beta has length {} but gradient has length {}",
            beta_t.len(),
            grad.len()
        )));
    }
    if !(gamma_u.is_finite() && gamma_u > 0.0) {
        return invalid(format!("gamma_u must be finite and > 0, got {gamma_u}"));
    }
    let step = &beta_t - &(&grad / gamma_u);
    let thresholded = soft_threshold(step.view(), cfg.lambda / gamma_u)?;
    project_l1_ball(thresholded.view(), cfg.rho)
}

/// Minimize `φ_n(β) = L_n(β) + λ‖β‖₁` over `‖β‖₁ ≤ ρ` by iterating
/// [`lqa_step`] from `beta0` (zero by default).
///
/// Stops once the objective decreases by less than `cfg.tol` in one
/// iteration (`converged = true`) or after `cfg.max_iters` iterations.
pub fn composite_gradient_descent(
    spec: &LossSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let (n, p) = x.dim();
    let beta = match &cfg.beta0 {
        Some(b) => b.clone(),
        None => Array1::zeros(p),
    };
    check_design(&x, &y, &beta.view())?;
    let gamma_u = match cfg.gamma_u {
        GammaU::Auto => gamma_u_for(spec, x)?,
        GammaU::Fixed(g) => g,
    };
    // rows of xt are columns of X, so both products below stream memory
    let xt: Array2<f64> = x.t().as_standard_layout().into_owned();
    let mut solver = Solver {
        spec,
        xt: xt.view(),
        y,
        n: n as f64,
        gamma_u,
        cfg,
    };
    solver.run(beta)
}

struct Solver<'a> {
    spec: &'a LossSpec,
    xt: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    n: f64,
    gamma_u: f64,
    cfg: &'a FitConfig,
}

impl Solver<'_> {
    fn objective(&self, r: &Array1<f64>, beta: &Array1<f64>) -> f64 {
        let loss: f64 = r.iter().map(|&ri| self.spec.value(ri)).sum::<f64>() / self.n;
        loss + self.cfg.lambda * l1_norm(beta.view())
    }

    fn run(&mut self, mut beta: Array1<f64>) -> Result<FitResult> {
        let cfg = self.cfg;
        let mut r = self.y.to_owned();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                r.scaled_add(-b, &self.xt.row(j));
            }
        }
        let mut phi = self.objective(&r, &beta);
        if !phi.is_finite() {
            return Err(Error::Divergence {
                iteration: 0,
                gamma_u: self.gamma_u,
            });
        }
        let mut trace = Vec::with_capacity(cfg.max_iters.min(1024) + 1);
        trace.push(phi);
        let mut converged = false;
        let mut iterations = 0;
        let mut d = Array1::<f64>::zeros(r.len());
        let tau = cfg.lambda / self.gamma_u;
        while iterations < cfg.max_iters {
            Zip::from(&mut d).and(&r).for_each(|di, &ri| *di = self.spec.deriv(ri));
            // fused form of `lqa_step`; row dots beat the generic mat-vec here
            let mut next = Array1::from_shape_fn(beta.len(), |j| {
                let grad = self.xt.row(j).dot(&d) * (-1.0 / self.n);
                shrink(beta[j] - grad / self.gamma_u, tau)
            });
            if l1_norm(next.view()) > cfg.rho {
                next = project_l1_ball(next.view(), cfg.rho)?;
            }
            for (j, (&new, &old)) in next.iter().zip(beta.iter()).enumerate() {
                let delta = new - old;
                if delta != 0.0 {
                    r.scaled_add(-delta, &self.xt.row(j));
                }
            }
            beta = next;
            iterations += 1;
            let phi_next = self.objective(&r, &beta);
            if !phi_next.is_finite() {
                return Err(Error::Divergence {
                    iteration: iterations,
                    gamma_u: self.gamma_u,
                });
            }
            trace.push(phi_next);
            let decrease = phi - phi_next;
            // an increase beyond rounding means γ_u is too small; keep going
            // and let divergence surface rather than report convergence
            let rounding = 1e-12 * (1.0 + phi.abs());
            phi = phi_next;
            if decrease < cfg.tol && decrease > -rounding {
                converged = true;
                break;
            }
        }
        Ok(FitResult {
            beta,
            objective_trace: trace,
            iterations,
            converged,
            gamma_u: self.gamma_u,
        })
    }
}

/// Objective `φ_n` evaluated directly from the data.
pub fn penalized_objective(
    spec: &LossSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    lambda: f64,
) -> Result<f64> {
    Ok(crate::loss::empirical_loss(spec, x, y, beta)? + lambda * l1_norm(beta))
}
