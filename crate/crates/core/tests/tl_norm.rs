mod common;

use aniso_tl::atoms::{atom_grid, atoms_field, bump_hat, plant_scales, BumpAtom};
use aniso_tl::covers::BumpShape;
use aniso_tl::field::{lp_norm, Quadrature, SampledField};
use aniso_tl::linalg::ExpansiveMatrix;
use aniso_tl::tl_norm::{norm, pieces, tl_norm, Analyzer, TlParams};
use common::m2;
use num_complex::Complex64;
use proptest::prelude::*;

const N: usize = 128;
const EXTENT: f64 = 24.0;

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn atom_in(a: &ExpansiveMatrix, an: &Analyzer, i: i64, c: Complex64) -> BumpAtom {
    let t = plant_scales(a, an.profile(), &[i]).unwrap();
    BumpAtom::new(t.delta(), t.atoms[0].eta.clone(), c).unwrap()
}

fn field(atoms: &[BumpAtom]) -> SampledField {
    let delta = atoms.iter().map(|a| a.delta).fold(f64::INFINITY, f64::min);
    atoms_field(atom_grid(2, delta, EXTENT, N).unwrap(), atoms)
}

/// ∫ Σ_i φ̂_i² |ĥ|² / ∫ |ĥ|² over the atom's frequency ball, by the midpoint rule.
fn plancherel_ratio(an: &Analyzer, at: &BumpAtom, scale: i64) -> f64 {
    let m = 160;
    let h = 2.0 * at.delta / m as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for u in 0..m {
        for v in 0..m {
            let z = [(u as f64 + 0.5) * h - at.delta, (v as f64 + 0.5) * h - at.delta];
            let b = bump_hat((z[0] * z[0] + z[1] * z[1]).sqrt() / at.delta);
            if b == 0.0 {
                continue;
            }
            let xi = [at.eta[0] + z[0], at.eta[1] + z[1]];
            let w: f64 = (scale - 8..=scale + 8).map(|i| an.profile().dilate(i).value(&xi).powi(2)).sum();
            num += w * b * b;
            den += b * b;
        }
    }
    num / den
}

#[test]
fn two_two_norm_matches_plancherel() {
    for a in [ExpansiveMatrix::scalar(2, 2.0).unwrap(), ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap(), m2([[2.0, 1.0], [0.0, 2.0]])] {
        let an = Analyzer::new(&a, BumpShape::default()).unwrap();
        for i in [-1, 0, 2] {
            let at = atom_in(&a, &an, i, one());
            let f = field(&[at.clone()]);
            let q = Quadrature::default();
            let got = tl_norm(&f, &an, &TlParams::new(0.0, 2.0, 2.0), &q).unwrap() / lp_norm(&f, 2.0, &q);
            let want = plancherel_ratio(&an, &at, i).sqrt();
            assert!((got / want - 1.0).abs() < 2e-3, "{:?} i = {i}: {got} vs {want}", a.rows());
        }
    }
}

#[test]
fn separated_bands_add_in_square() {
    let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
    let an = Analyzer::new(&a, BumpShape::default()).unwrap();
    let (x, y) = (atom_in(&a, &an, 0, one()), atom_in(&a, &an, 6, Complex64::new(0.0, 2.0)));
    let delta = x.delta.min(y.delta);
    let x = BumpAtom::new(delta, x.eta.clone(), x.coeff()).unwrap();
    let y = BumpAtom::new(delta, y.eta.clone(), y.coeff()).unwrap();
    let prm = TlParams::new(0.0, 2.0, 2.0);
    let q = Quadrature::default();
    let nx = tl_norm(&field(&[x.clone()]), &an, &prm, &q).unwrap();
    let ny = tl_norm(&field(&[y.clone()]), &an, &prm, &q).unwrap();
    let nxy = tl_norm(&field(&[x, y]), &an, &prm, &q).unwrap();
    assert!((nxy * nxy / (nx * nx + ny * ny) - 1.0).abs() < 2e-3);
}

#[test]
fn q_nesting() {
    let a = ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap();
    let an = Analyzer::new(&a, BumpShape::default()).unwrap();
    let f = field(&[atom_in(&a, &an, 1, one()), atom_in(&a, &an, 2, Complex64::new(-0.5, 0.5))]);
    let q = Quadrature::default();
    // exact pointwise ℓ^q nesting; the p = ∞ forms are only equivalent up to constants
    for p in [0.5, 1.0, 2.0] {
        let v: Vec<f64> = [0.5, 1.0, 2.0, f64::INFINITY].iter().map(|&qq| norm(&f, &an, &TlParams::new(0.0, p, qq), &q).unwrap()).collect();
        for w in v.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "p = {p}: {v:?}");
        }
    }
}

#[test]
fn smoothness_weight_brackets() {
    let a = ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap();
    let an = Analyzer::new(&a, BumpShape::default()).unwrap();
    let f = field(&[atom_in(&a, &an, 3, one())]);
    let q = Quadrature::default();
    let (lo, hi) = pieces(&f, &an, None, &q).unwrap().range().unwrap();
    for alpha in [-1.0, 0.5, 2.0] {
        for (p, qq) in [(2.0, 2.0), (1.0, 1.0), (2.0, f64::INFINITY)] {
            let r = norm(&f, &an, &TlParams::new(alpha, p, qq), &q).unwrap() / norm(&f, &an, &TlParams::new(0.0, p, qq), &q).unwrap();
            let (x, y) = ((alpha * lo as f64 * a.ln_det()).exp(), (alpha * hi as f64 * a.ln_det()).exp());
            assert!(r >= x.min(y) * (1.0 - 1e-9) && r <= x.max(y) * (1.0 + 1e-9), "alpha {alpha}: {r} not in [{x}, {y}]");
        }
    }
}

#[test]
fn parameters_are_checked() {
    assert!(TlParams::new(0.0, 0.0, 2.0).validate().is_err());
    assert!(TlParams::new(0.0, 2.0, -1.0).validate().is_err());
    assert!(TlParams::new(f64::NAN, 2.0, 2.0).validate().is_err());
    assert!((TlParams::new(0.0, 0.5, 4.0).beta_floor() - 2.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn homogeneous_in_the_coefficient(re in -3.0f64..3.0, im in -3.0f64..3.0, p in prop_oneof![Just(1.0), Just(2.0), Just(f64::INFINITY)]) {
        prop_assume!(re.abs() + im.abs() > 1e-3);
        let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
        let an = Analyzer::new(&a, BumpShape::default()).unwrap();
        let f = field(&[atom_in(&a, &an, 1, one())]);
        let c = Complex64::new(re, im);
        let q = Quadrature::default();
        let prm = TlParams::new(0.0, p, 2.0);
        let n1 = norm(&f, &an, &prm, &q).unwrap();
        let nc = norm(&f.scaled(c), &an, &prm, &q).unwrap();
        prop_assert!((nc / (c.norm() * n1) - 1.0).abs() < 1e-9);
    }
}
