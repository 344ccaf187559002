mod common;

use aniso_tl::linalg::ExpansiveMatrix;
use aniso_tl::quasinorm::{equivalence_ratio, exponent_constant, quasi_triangle_constant, StepQuasiNorm};
use aniso_tl::Error;
use common::{battery, expansive_2x2};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scale index by plain powers: the first i with A^{-(i+1)}x ∈ Ω, given A^{-i}x ∉ Ω.
fn index_by_powers(a: &ExpansiveMatrix, q: &StepQuasiNorm, x: &[f64]) -> i64 {
    let e = &q.dilation().ellipsoid;
    let inside = |i: i64| {
        let p = if i >= 0 { a.inverse().pow(i as u32) } else { a.entries().pow((-i) as u32) };
        let y: DVector<f64> = p * DVector::from_row_slice(x);
        e.contains(y.as_slice())
    };
    let mut i = -30;
    while !inside(i + 1) || inside(i) {
        i += 1;
        assert!(i < 30, "no index found");
    }
    i
}

#[test]
fn index_matches_plain_powers() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for a in battery() {
        let q = StepQuasiNorm::from_matrix(a.clone()).unwrap();
        for _ in 0..300 {
            let t = 10f64.powf(r.random_range(-3.0..3.0));
            let x: Vec<f64> = (0..a.dim()).map(|_| r.random_range(-1.0..1.0) * t).collect();
            assert_eq!(q.scale_index(&x).unwrap(), index_by_powers(&a, &q, &x), "{:?} at {x:?}", a.rows());
        }
    }
}

#[test]
fn scalar_index_closed_form() {
    // Ω is the disc of area one, so i = ⌊log₂(|x|√π)⌋
    let q = StepQuasiNorm::from_matrix(ExpansiveMatrix::scalar(2, 2.0).unwrap()).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    while checked < 2000 {
        let t = 10f64.powf(r.random_range(-6.0..6.0));
        let th = r.random_range(0.0..std::f64::consts::TAU);
        let x = [t * th.cos(), t * th.sin()];
        let l = (t * std::f64::consts::PI.sqrt()).log2();
        if (l - l.round()).abs() < 1e-9 {
            continue;
        }
        assert_eq!(q.scale_index(&x).unwrap(), l.floor() as i64);
        assert_eq!(q.rho(&x).unwrap(), 4f64.powi(l.floor() as i32));
        checked += 1;
    }
}

#[test]
fn zero_and_errors() {
    let q = StepQuasiNorm::from_matrix(ExpansiveMatrix::diag(&[2.0, 3.0, 5.0]).unwrap()).unwrap();
    assert_eq!(q.rho(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
    assert_eq!(q.scale_index(&[0.0, 0.0, 0.0]), Err(Error::ZeroPoint));
    assert_eq!(q.scale_index(&[1.0, 0.0]), Err(Error::DimMismatch(2, 3)));
}

#[test]
fn triangle_constant_for_scalar() {
    // |x + y| ≤ 2 max(|x|, |y|) moves the index up by at most one: K ≤ 4
    let q = StepQuasiNorm::from_matrix(ExpansiveMatrix::scalar(2, 2.0).unwrap()).unwrap();
    let k = quasi_triangle_constant(&q, 4000, 3);
    assert!((0.9..=4.0).contains(&k), "{k}");
}

#[test]
fn equivalence_ratio_bounded_only_for_equivalent_pairs() {
    let q2 = StepQuasiNorm::from_matrix(ExpansiveMatrix::scalar(2, 2.0).unwrap()).unwrap();
    let q3 = StepQuasiNorm::from_matrix(ExpansiveMatrix::scalar(2, 3.0).unwrap()).unwrap();
    let q24 = StepQuasiNorm::from_matrix(ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap()).unwrap();
    let spread = |a: &StepQuasiNorm, b: &StepQuasiNorm, r: i64| {
        let (lo, hi) = equivalence_ratio(a, b, 4000, r, 9).unwrap();
        hi / lo
    };
    let (s10, s20) = (spread(&q2, &q3, 10), spread(&q2, &q3, 20));
    assert!(s20 < 2.0 * s10 && s20 < 100.0, "{s10} {s20}");
    let (t10, t20) = (spread(&q2, &q24, 10), spread(&q2, &q24, 20));
    assert!(t20 > 100.0 * t10, "{t10} {t20}");
}

#[test]
fn exponent_constants_are_finite() {
    for a in battery() {
        let q = StepQuasiNorm::from_matrix(a).unwrap();
        let c = exponent_constant(&q, 2000, 4).unwrap();
        assert!(c.is_finite() && c >= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn index_shifts_under_a(a in expansive_2x2(), x0 in -5.0f64..5.0, x1 in -5.0f64..5.0, e in -8i32..8) {
        prop_assume!(x0 != 0.0 || x1 != 0.0);
        let s = 2f64.powi(e);
        let x = [x0 * s, x1 * s];
        let q = StepQuasiNorm::from_matrix(a.clone()).unwrap();
        let ax = a.entries() * DVector::from_row_slice(&x);
        let i = q.scale_index(&x).unwrap();
        prop_assert_eq!(q.scale_index(ax.as_slice()).unwrap(), i + 1);
        let rx = q.rho(&x).unwrap();
        prop_assert!((q.rho(ax.as_slice()).unwrap() / (a.det_abs() * rx) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn index_is_monotone_along_rays(a in expansive_2x2(), th in 0.0f64..std::f64::consts::TAU, t in 0.01f64..100.0, f in 1.0f64..50.0) {
        let q = StepQuasiNorm::from_matrix(a).unwrap();
        let x = [t * th.cos(), t * th.sin()];
        let y = [f * x[0], f * x[1]];
        prop_assert!(q.scale_index(&y).unwrap() >= q.scale_index(&x).unwrap());
    }

    #[test]
    fn symmetric_under_negation(a in expansive_2x2(), x0 in -9.0f64..9.0, x1 in 0.1f64..9.0) {
        let q = StepQuasiNorm::from_matrix(a).unwrap();
        prop_assert_eq!(q.scale_index(&[x0, x1]).unwrap(), q.scale_index(&[-x0, -x1]).unwrap());
    }
}
