//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut impl Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut impl Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Catoni influence written straight from its definition.
pub fn catoni_psi_ref(t: f64) -> f64 {
    let a = t.abs();
    let m = if a < 1.0 {
        -(1.0 - a + a * a / 2.0).ln()
    } else {
        2f64.ln()
    };
    m * t.signum()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adapt(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + adapt(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(a, b, fa, fm, fb);
    adapt(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `(2/α) ∫₀^|x| ψ_c(αt) dt` by quadrature, split at the kink `|t| = 1/α`.
pub fn catoni_loss_quadrature(x: f64, alpha: f64) -> f64 {
    let f = |t: f64| 2.0 / alpha * catoni_psi_ref(alpha * t);
    let a = x.abs();
    let knot = 1.0 / alpha;
    // the loss is at most x², so this is a relative tolerance on large values
    let tol = 1e-13 * (a * a).max(1.0);
    if a <= knot {
        integrate(&f, 0.0, a, tol)
    } else {
        integrate(&f, 0.0, knot, tol) + integrate(&f, knot, a, tol)
    }
}

/// Euclidean projection onto the L1 ball by enumerating every face.
///
/// The projection keeps the signs of `v`, so on a face with support `S` it
/// is `v_S − θ sign(v_S)` with `θ` set by `‖w‖₁ = ρ`. Every sign-consistent
/// face candidate (plus `v` itself when feasible) is feasible; the nearest
/// one is the projection.
pub fn project_l1_bruteforce(v: &[f64], rho: f64) -> Vec<f64> {
    let p = v.len();
    let dist = |w: &[f64]| w.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut best: Option<(f64, Vec<f64>)> = None;
    if v.iter().map(|x| x.abs()).sum::<f64>() <= rho {
        return v.to_vec();
    }
    for mask in 1u32..(1 << p) {
        let idx: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 1).collect();
        let theta = (idx.iter().map(|&j| v[j].abs()).sum::<f64>() - rho) / idx.len() as f64;
        if theta < 0.0 || idx.iter().any(|&j| v[j].abs() < theta) {
            continue;
        }
        let mut w = vec![0.0; p];
        for &j in &idx {
            w[j] = v[j] - theta * v[j].signum();
        }
        let d = dist(&w);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, w));
        }
    }
    best.expect("some face is sign consistent").1
}

/// Largest eigenvalue of `XᵀX/n` from a dense symmetric eigendecomposition.
pub fn top_gram_eigenvalue(x: &Array2<f64>) -> f64 {
    let (n, p) = x.dim();
    let m = nalgebra::DMatrix::from_fn(n, p, |i, j| x[[i, j]]);
    let g = m.transpose() * &m / n as f64;
    g.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Ordinary least-squares slope of `ys` against `0, 1, 2, ...`.
pub fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}
