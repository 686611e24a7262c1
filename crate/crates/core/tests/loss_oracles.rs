mod common;

use approx::assert_relative_eq;
use ndarray::Array1;
use proptest::prelude::*;
use ralasso::loss::*;
use ralasso::LossSpec;

use common::*;

fn families(alpha: f64) -> Vec<LossSpec> {
    vec![
        LossSpec::square(),
        LossSpec::ra_quadratic(alpha).unwrap(),
        LossSpec::catoni(alpha).unwrap(),
        LossSpec::smoothed_lad(alpha).unwrap(),
    ]
}

#[test]
fn catoni_matches_quadrature() {
    for alpha in [0.05f64, 0.3, 1.0, 4.0] {
        for k in -60..=60 {
            let x = k as f64 * 0.25 / alpha.sqrt();
            let closed = loss_value(&LossSpec::catoni(alpha).unwrap(), x).unwrap();
            let quad = catoni_loss_quadrature(x, alpha);
            assert!((closed - quad).abs() < 1e-9, "alpha={alpha} x={x}: {closed} vs {quad}");
        }
    }
}

#[test]
fn catoni_series_branch_is_seamless() {
    // the primitive switches formulas at α|x| = 1e-2
    let spec = LossSpec::catoni(1.0).unwrap();
    for s in [9.99e-3, 1e-2, 1.001e-2] {
        let quad = catoni_loss_quadrature(s, 1.0);
        assert_relative_eq!(spec.value(s), quad, max_relative = 1e-10);
    }
}

#[test]
fn derivative_is_the_influence() {
    for alpha in [0.2, 1.0, 3.0] {
        for k in -50..=50 {
            let x = k as f64 * 0.13;
            let ra = loss_deriv(&LossSpec::ra_quadratic(alpha).unwrap(), x).unwrap();
            assert_relative_eq!(ra, 2.0 / alpha * huber_psi(alpha * x).unwrap(), max_relative = 1e-14);
            let c = loss_deriv(&LossSpec::catoni(alpha).unwrap(), x).unwrap();
            assert_relative_eq!(
                c,
                2.0 / alpha * catoni_psi_ref(alpha * x),
                max_relative = 1e-12,
                epsilon = 1e-300
            );
        }
    }
}

#[test]
fn derivative_matches_finite_differences() {
    let h = 1e-6;
    for spec in families(0.7) {
        for k in -40..=40 {
            let x = k as f64 * 0.173 + 0.011;
            let fd = (spec.value(x + h) - spec.value(x - h)) / (2.0 * h);
            assert!(
                (fd - spec.deriv(x)).abs() < 1e-6 * (1.0 + fd.abs()),
                "{:?} x={x}",
                spec.kind()
            );
        }
    }
}

#[test]
fn sq_loss_and_gradient_by_hand() {
    let x = ndarray::array![[1.0, 2.0], [0.0, -1.0], [3.0, 1.0]];
    let y = ndarray::array![1.0, 1.0, 2.0];
    let beta = ndarray::array![0.5, -0.5];
    // residuals 1.5, 0.5, 1.0
    let l = empirical_loss(&LossSpec::square(), x.view(), y.view(), beta.view()).unwrap();
    assert_relative_eq!(l, (2.25 + 0.25 + 1.0) / 3.0, max_relative = 1e-15);
    let g = empirical_gradient(&LossSpec::square(), x.view(), y.view(), beta.view()).unwrap();
    assert_relative_eq!(g[0], -2.0 * (1.5 + 3.0) / 3.0, max_relative = 1e-15);
    assert_relative_eq!(g[1], -2.0 * (3.0 - 0.5 + 1.0) / 3.0, max_relative = 1e-15);
}

proptest! {
    #[test]
    fn losses_are_even_nonnegative_and_zero_at_zero(x in -1e3f64..1e3, alpha in 1e-3f64..1e2) {
        for spec in families(alpha) {
            let v = spec.value(x);
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v, spec.value(-x));
            prop_assert_eq!(spec.value(0.0), 0.0);
        }
    }

    #[test]
    fn robust_losses_sit_below_square(x in -1e3f64..1e3, alpha in 1e-3f64..1e2) {
        let sq = x * x;
        prop_assert!(LossSpec::ra_quadratic(alpha).unwrap().value(x) <= sq * (1.0 + 1e-15));
        prop_assert!(LossSpec::catoni(alpha).unwrap().value(x) <= sq * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn scaled_influence_is_bounded_by_argument(x in -1e3f64..1e3, alpha in 1e-3f64..1e2) {
        prop_assert!(huber_psi(alpha * x).unwrap().abs() / alpha <= x.abs() * (1.0 + 1e-15));
        prop_assert!(catoni_psi(alpha * x).unwrap().abs() / alpha <= x.abs() * (1.0 + 1e-12));
    }

    #[test]
    fn derivative_is_monotone(a in -50f64..50.0, b in -50f64..50.0, alpha in 1e-2f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for spec in families(alpha) {
            prop_assert!(spec.deriv(lo) <= spec.deriv(hi));
        }
    }

    #[test]
    fn gradient_agrees_with_rowwise_sum(seed in 0u64..1000, n in 1usize..12, p in 1usize..6) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, p);
        let y = normal_vector(&mut r, n, 3.0);
        let beta = normal_vector(&mut r, p, 1.0);
        for spec in families(0.8) {
            let g = empirical_gradient(&spec, x.view(), y.view(), beta.view()).unwrap();
            let mut want = Array1::<f64>::zeros(p);
            for i in 0..n {
                let ri = y[i] - x.row(i).dot(&beta);
                for j in 0..p {
                    want[j] -= spec.deriv(ri) * x[[i, j]] / n as f64;
                }
            }
            for j in 0..p {
                prop_assert!((g[j] - want[j]).abs() <= 1e-12 * (1.0 + want[j].abs()));
            }
        }
    }
}
