use aniso_tl::cubes::*;
use aniso_tl::linalg::ExpansiveMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn geo(rows: &[[f64; 2]; 2]) -> CubeGeometry {
    CubeGeometry::new(&ExpansiveMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()).unwrap()
}

fn two() -> CubeGeometry {
    geo(&[[2.0, 0.0], [0.0, 2.0]])
}

fn one(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn seq(items: &[(i64, [i64; 2], f64)]) -> CubeSequence {
    let mut c = CubeSequence::new();
    for &(i, k, v) in items {
        c.insert(DilatedCube::new(i, k.to_vec()), one(v));
    }
    c
}

#[test]
fn cube_measure_is_det_power() {
    let g = geo(&[[2.0, 0.0], [0.0, 4.0]]);
    for i in -5..=5 {
        let c = DilatedCube::new(i, vec![3, -2]);
        assert_eq!(g.measure(&c), 8f64.powi(i as i32));
        assert_eq!(g.measure(&c).log(8.0).round() as i64, c.scale());
    }
}

#[test]
fn unit_cubes_tile_under_two_id() {
    let g = two();
    let d = DilatedCube::new(0, vec![0, 0]);
    assert_eq!(g.tent(&d, 0).unwrap(), vec![d.clone()]);
    let t = g.tent(&d, -1).unwrap();
    assert_eq!(t.len(), 5);
    assert!(t.contains(&d));
}

#[test]
fn tent_contains_itself_and_is_symmetric_at_equal_scale() {
    let g = geo(&[[2.0, 1.0], [0.0, 2.0]]);
    for i in -2..=2 {
        let d = DilatedCube::new(i, vec![1, -1]);
        let t = g.tent(&d, i - 2).unwrap();
        assert!(t.contains(&d));
        for e in t.iter().filter(|e| e.i == i) {
            assert!(g.tent(e, i).unwrap().contains(&d));
        }
    }
}

#[test]
fn tent_containment_radius() {
    for g in [two(), geo(&[[2.0, 1.0], [0.0, 2.0]]), geo(&[[1.0, -1.0], [1.0, 1.0]])] {
        let n = g.tent_radius();
        for i in -1..=2 {
            let d = DilatedCube::new(i, vec![2, 1]);
            let t = g.tent(&d, i - 4).unwrap();
            assert!(g.containment_radius(&d, &t).unwrap() <= n);
        }
    }
}

#[test]
fn f1inf_single_and_disjoint() {
    let g = geo(&[[2.0, 0.0], [0.0, 4.0]]);
    let a = seq(&[(1, [0, 0], 1.0)]);
    assert!((f1inf_norm(&g, &a).unwrap() - 8f64.sqrt()).abs() < 1e-12);
    let b = seq(&[(0, [5, 5], 2.0)]);
    let both = seq(&[(1, [0, 0], 1.0), (0, [5, 5], 2.0)]);
    let sum = f1inf_norm(&g, &a).unwrap() + f1inf_norm(&g, &b).unwrap();
    assert!((f1inf_norm(&g, &both).unwrap() - sum).abs() < 1e-12);
}

#[test]
fn f1inf_nested_pair_matches_grid_quadrature() {
    let g = two();
    let c = seq(&[(0, [0, 0], 1.0), (1, [0, 0], 1.0)]);
    let n = 2000;
    let h = 2.0 / n as f64;
    let mut q = 0.0;
    for a in 0..n {
        for b in 0..n {
            let (x, y) = ((a as f64 + 0.5) * h, (b as f64 + 0.5) * h);
            q += if x < 1.0 && y < 1.0 { 1.0 } else { 0.5 } * h * h;
        }
    }
    assert!((f1inf_norm(&g, &c).unwrap() - q).abs() < 1e-6);
    assert!((q - 2.5).abs() < 1e-9);
}

#[test]
fn f1inf_sheared_matches_point_sampling() {
    let g = geo(&[[2.0, 1.0], [0.0, 2.0]]);
    let c = seq(&[(1, [0, 0], 1.0), (0, [1, 0], 3.0), (-1, [2, 1], 0.5), (0, [0, 1], -2.0)]);
    let exact = f1inf_norm(&g, &c).unwrap();
    // membership by solving A^i y = x
    let a = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
    let inv = a.clone().try_inverse().unwrap();
    let pow = |i: i64| {
        let base = if i >= 0 { &a } else { &inv };
        (0..i.abs()).fold(nalgebra::DMatrix::identity(2, 2), |m, _| base * m)
    };
    let n = 1500;
    let (lo, hi) = (-1.0, 6.0);
    let h = (hi - lo) / n as f64;
    let mut q = 0.0;
    for s in 0..n {
        for t in 0..n {
            let x = nalgebra::DVector::from_vec(vec![lo + (s as f64 + 0.5) * h, lo + (t as f64 + 0.5) * h]);
            let mut best: f64 = 0.0;
            for (d, v) in c.iter() {
                let y = pow(-d.i) * &x;
                if (0..2).all(|r| (0.0..1.0).contains(&(y[r] - d.k[r] as f64))) {
                    best = best.max(v.norm() / 4f64.powi(d.i as i32).sqrt());
                }
            }
            q += best * h * h;
        }
    }
    assert!((exact - q).abs() / exact < 2e-3, "{exact} {q}");
}

#[test]
fn finf1_single_cube() {
    for g in [two(), geo(&[[2.0, 0.0], [0.0, 4.0]]), geo(&[[2.0, 1.0], [0.0, 2.0]])] {
        for i in -2..=2 {
            let d = DilatedCube::new(i, vec![0, 1]);
            let want = g.measure(&d).powf(-0.5);
            let c = CubeSequence::single(d, one(1.0));
            assert!((finf1_norm_def(&g, &c, 2).unwrap() / want - 1.0).abs() < 1e-10);
            assert!((finf1_norm_tent(&g, &c, 2).unwrap() / want - 1.0).abs() < 1e-10);
            let b = carleson_constant(&g, &c, CarlesonMethod::Bruteforce).unwrap();
            assert!((b.upper / want - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn carleson_two_disjoint_cubes() {
    let g = two();
    let c = seq(&[(1, [0, 0], 1.0), (1, [3, 0], 1.0)]);
    let b = carleson_constant(&g, &c, CarlesonMethod::Bruteforce).unwrap();
    assert!((b.upper - 0.5).abs() < 1e-12);
}

#[test]
fn bruteforce_refuses_large_support() {
    let g = two();
    let mut c = CubeSequence::new();
    for k in 0..15 {
        c.insert(DilatedCube::new(0, vec![k, 0]), one(1.0));
    }
    assert!(carleson_constant(&g, &c, CarlesonMethod::Bruteforce).is_err());
    assert!(carleson_constant(&g, &c, CarlesonMethod::Greedy).is_ok());
}

#[test]
fn pairing_examples() {
    let g = two();
    let c = seq(&[(0, [0, 0], 1.0)]);
    let zero = CubeSequence::new();
    let p = pairing_bound_check(&g, &c, &zero, 2, 20.0).unwrap();
    assert_eq!(p.pairing, 0.0);
    assert_eq!(p.finf1, 0.0);
    let d = seq(&[(2, [1, 1], 1.0)]);
    let p = pairing_bound_check(&g, &d, &d, 2, 20.0).unwrap();
    assert!((p.pairing - 1.0).abs() < 1e-12);
    assert!((p.f1inf * p.finf1 - 1.0).abs() < 1e-12);
}

#[test]
fn sequence_file_round_trip() {
    let text = "# i k1 k2 re im\n0 1 -2 1.5 0\n\n-1 0 0 0 -2.25\n";
    let c = CubeSequence::parse(text).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c.get(&DilatedCube::new(-1, vec![0, 0])), Complex64::new(0.0, -2.25));
    assert_eq!(CubeSequence::parse(&c.to_text()).unwrap(), c);
    assert!(CubeSequence::parse("0 1 1 0\n0 1 1 1 0\n").is_err());
    assert!(CubeSequence::parse("0 x 1 1 0\n").is_err());
    assert!(CubeSequence::parse("0 1 1 0 0\n").unwrap().is_empty());
}

#[test]
fn battery_passes() {
    let cfg = CubeBatteryConfig { sequences: 200, pairs: 200, ..Default::default() };
    let r = cube_battery(&cfg).unwrap();
    let consts = r.table("constants").unwrap();
    for row in &consts.rows {
        assert!(row[4] < 20.0);
    }
    assert!(r.verdict.passed());
}

fn arb_seq() -> impl Strategy<Value = Vec<(i64, i64, i64, f64, f64)>> {
    prop::collection::vec((-2i64..=2, 0i64..6, 0i64..6, -3.0f64..3.0, -3.0f64..3.0), 1..8)
}

fn build(items: &[(i64, i64, i64, f64, f64)]) -> CubeSequence {
    let mut c = CubeSequence::new();
    for &(i, a, b, re, im) in items {
        c.insert(DilatedCube::new(i, vec![a - 2, b - 2]), Complex64::new(re, im));
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn norms_are_homogeneous(items in arb_seq(), s in 0.1f64..5.0) {
        prop_assume!(!build(&items).is_empty());
        let g = geo(&[[2.0, 1.0], [0.0, 2.0]]);
        let c = build(&items);
        let cs = c.scaled(Complex64::new(0.0, s));
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        prop_assert!(rel(f1inf_norm(&g, &cs).unwrap(), s * f1inf_norm(&g, &c).unwrap()));
        prop_assert!(rel(finf1_norm_def(&g, &cs, 2).unwrap(), s * finf1_norm_def(&g, &c, 2).unwrap()));
        prop_assert!(rel(finf1_norm_tent(&g, &cs, 2).unwrap(), s * finf1_norm_tent(&g, &c, 2).unwrap()));
        let b = |c: &CubeSequence| carleson_constant(&g, c, CarlesonMethod::Bruteforce).unwrap().upper;
        prop_assert!(rel(b(&cs), s * b(&c)));
    }

    #[test]
    fn norms_are_monotone(items in arb_seq(), pick in 0usize..8, grow in 1.0f64..3.0) {
        let g = geo(&[[2.0, 0.0], [0.0, 4.0]]);
        let c = build(&items);
        prop_assume!(!c.is_empty());
        let cubes = c.cubes();
        let d = &cubes[pick % cubes.len()];
        let mut up = c.clone();
        up.insert(d.clone(), c.get(d) * grow);
        let tol = 1.0 + 1e-12;
        prop_assert!(f1inf_norm(&g, &c).unwrap() <= f1inf_norm(&g, &up).unwrap() * tol);
        prop_assert!(finf1_norm_def(&g, &c, 2).unwrap() <= finf1_norm_def(&g, &up, 2).unwrap() * tol);
        prop_assert!(finf1_norm_tent(&g, &c, 2).unwrap() <= finf1_norm_tent(&g, &up, 2).unwrap() * tol);
        let b = |c: &CubeSequence| carleson_constant(&g, c, CarlesonMethod::Bruteforce).unwrap().upper;
        prop_assert!(b(&c) <= b(&up) * tol);
    }

    #[test]
    fn greedy_brackets_bruteforce(items in arb_seq()) {
        let g = geo(&[[2.0, 1.0], [0.0, 2.0]]);
        let c = build(&items);
        prop_assume!(!c.is_empty());
        let b = carleson_constant(&g, &c, CarlesonMethod::Bruteforce).unwrap().upper;
        let gr = carleson_constant(&g, &c, CarlesonMethod::Greedy).unwrap();
        prop_assert!(gr.lower <= b * (1.0 + 1e-9));
        prop_assert!(b <= gr.upper * (1.0 + 1e-9));
        prop_assert!(gr.upper <= finf1_norm_tent(&g, &c, 2).unwrap() * (1.0 + 1e-9));
    }

    #[test]
    fn def_below_tent(items in arb_seq()) {
        let g = geo(&[[1.0, -1.0], [1.0, 1.0]]);
        let c = build(&items);
        prop_assume!(!c.is_empty());
        prop_assert!(finf1_norm_def(&g, &c, 2).unwrap() <= finf1_norm_tent(&g, &c, 2).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn widening_the_window_changes_nothing(items in arb_seq()) {
        let g = geo(&[[2.0, 1.0], [0.0, 2.0]]);
        let c = build(&items);
        prop_assume!(!c.is_empty());
        let a = finf1_norm_def(&g, &c, 2).unwrap();
        prop_assert!((finf1_norm_def(&g, &c, 5).unwrap() - a).abs() <= 1e-12 * a);
    }

    #[test]
    fn lemma27_direction(items in arb_seq(), weights in prop::collection::vec(0.0f64..2.0, 8)) {
        let g = two();
        let a = build(&items);
        prop_assume!(!a.is_empty());
        let mut b = CubeSequence::new();
        for (t, d) in a.cubes().into_iter().enumerate() {
            b.insert(d.clone(), Complex64::new(weights[t] * g.measure(&d).sqrt(), 0.0));
        }
        let lhs: f64 = a.iter().map(|(d, v)| v.norm() * g.measure(d).sqrt() * b.get(d).re / g.measure(d).sqrt()).sum();
        let c = carleson_constant(&g, &a, CarlesonMethod::Bruteforce).unwrap().upper;
        prop_assert!(lhs <= c * f1inf_norm(&g, &b).unwrap() * (1.0 + 1e-9));
    }
}
