mod common;

use aniso_tl::atoms::{plant_atoms, plant_scales, PlantMode};
use aniso_tl::convolution::radial_bump_norm;
use aniso_tl::covers::BumpShape;
use aniso_tl::experiments::{khintchine, khintchine_bracket, profile, sign_moment_exact, sign_moment_mc, KhintchineConfig};
use aniso_tl::linalg::ExpansiveMatrix;
use proptest::prelude::*;

/// E|Σθa|^p over all 2^K sign patterns, written out independently.
fn brute_moment(a: &[f64], p: f64) -> f64 {
    let k = a.len();
    let mut s = 0.0;
    for m in 0u32..(1 << k) {
        let t: f64 = a.iter().enumerate().map(|(b, x)| if m >> b & 1 == 1 { -x } else { *x }).sum();
        s += t.abs().powf(p);
    }
    s / (1u64 << k) as f64
}

#[test]
fn exact_khintchine_values() {
    for p in [0.5, 1.0, 3.0, 4.0] {
        assert!((sign_moment_exact(&[1.0], p) - 1.0).abs() < 1e-12);
    }
    assert!((sign_moment_exact(&[1.0, 1.0], 4.0) / 4.0 - 2.0).abs() < 1e-12);
    // |±1 ± 1 ± 1| is 3 for two of the eight patterns and 1 for the other six
    assert!((sign_moment_exact(&[1.0, 1.0, 1.0], 4.0) - (2.0 * 81.0 + 6.0) / 8.0).abs() < 1e-12);
}

#[test]
fn szarek_and_gaussian_constants() {
    let (lo, hi) = khintchine_bracket(1.0);
    assert!((lo - 0.5f64.sqrt()).abs() < 1e-12 && hi == 1.0);
    let (lo, hi) = khintchine_bracket(4.0);
    // E g⁴ = 3
    assert!(lo == 1.0 && (hi - 3.0).abs() < 1e-12);
    // the pair (1, 1) attains the lower bound at p = 1
    assert!((sign_moment_exact(&[1.0, 1.0], 1.0) / 2f64.sqrt() - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn khintchine_report_passes() {
    let rep = khintchine(&KhintchineConfig::default()).unwrap();
    assert!(rep.verdict.passed());
    let t = rep.table("ratios").unwrap();
    let (ex, lo, hi) = (t.column("exact").unwrap(), t.column("lower").unwrap(), t.column("upper").unwrap());
    assert!(ex.iter().zip(&lo).zip(&hi).all(|((e, l), h)| l * (1.0 - 1e-12) <= *e && *e <= h * (1.0 + 1e-12)));
}

#[test]
fn bump_norms_by_plancherel() {
    // ‖φ‖₂² = ∫|φ̂|² and ‖φ∗φ‖₂² = ∫|φ̂|⁴, radially in the plane
    let m = 20_000;
    let h = 1.0 / m as f64;
    let (mut s2, mut s4) = (0.0, 0.0);
    for k in 0..m {
        let r = (k as f64 + 0.5) * h;
        let b = aniso_tl::atoms::bump_hat(r);
        s2 += b * b * r * h;
        s4 += b.powi(4) * r * h;
    }
    let tau = std::f64::consts::TAU;
    assert!((radial_bump_norm(2.0, false) / (tau * s2).sqrt() - 1.0).abs() < 1e-4);
    assert!((radial_bump_norm(2.0, true) / (tau * s4).sqrt() - 1.0).abs() < 1e-4);
}

#[test]
fn planted_atoms_sit_in_their_cells() {
    let a = ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap();
    let q = profile(&a, BumpShape::default()).unwrap();
    let t = plant_scales(&a, &q, &[-10, 0, 10]).unwrap();
    t.verify(&q, None, &a).unwrap();
    for (at, &i) in t.atoms.iter().zip(&t.i_k) {
        assert!(q.dilate(i).in_support(&at.eta));
    }
    let b = ExpansiveMatrix::scalar(2, 2.0).unwrap();
    let p = profile(&b, BumpShape::default()).unwrap();
    let tr = plant_atoms(&b, &p, &q, 4, PlantMode::Separated, 200).unwrap();
    assert_eq!(tr.len(), 4);
    tr.verify(&p, Some(&q), &b).unwrap();
    assert!(tr.j_k.iter().all(|&j| j == tr.j_k[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exhaustive_matches_brute_force(a in prop::collection::vec(-3.0f64..3.0, 1..10), p in 0.5f64..5.0) {
        let want = brute_moment(&a, p);
        prop_assert!((sign_moment_exact(&a, p) - want).abs() <= 1e-12 * want.max(1e-300));
    }

    #[test]
    fn second_moment_is_the_square_norm(a in prop::collection::vec(-3.0f64..3.0, 1..12)) {
        let l2: f64 = a.iter().map(|x| x * x).sum();
        prop_assert!((sign_moment_exact(&a, 2.0) - l2).abs() <= 1e-12 * l2.max(1.0));
    }

    #[test]
    fn ratios_lie_in_the_bracket(a in prop::collection::vec(-3.0f64..3.0, 1..12), p in 0.5f64..6.0) {
        let l2p = a.iter().map(|x| x * x).sum::<f64>().powf(p / 2.0);
        prop_assume!(l2p > 1e-6);
        let r = sign_moment_exact(&a, p) / l2p;
        let (lo, hi) = khintchine_bracket(p);
        prop_assert!(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn monte_carlo_is_unbiased(a in prop::collection::vec(-2.0f64..2.0, 2..8), seed in 0u64..10_000) {
        let ex = sign_moment_exact(&a, 3.0);
        let (mc, se) = sign_moment_mc(&a, 3.0, 4000, seed);
        prop_assert!((mc - ex).abs() <= 5.0 * se + 1e-12);
    }
}
