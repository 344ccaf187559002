use aniso_tl::equivalence::*;
use aniso_tl::linalg::ExpansiveMatrix;

fn m(rows: &[[f64; 2]; 2]) -> ExpansiveMatrix {
    ExpansiveMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn pairs() -> Vec<(ExpansiveMatrix, ExpansiveMatrix, Verdict)> {
    let two = m(&[[2.0, 0.0], [0.0, 2.0]]);
    vec![
        (two.clone(), m(&[[3.0, 0.0], [0.0, 3.0]]), Verdict::Equivalent),
        (two.clone(), m(&[[0.0, -2.0], [2.0, 0.0]]), Verdict::Equivalent),
        (two.clone(), m(&[[2.0, 0.0], [0.0, 4.0]]), Verdict::Inequivalent),
        (two.clone(), m(&[[2.0, 1.0], [0.0, 2.0]]), Verdict::Inequivalent),
        (m(&[[2.0, 0.0], [0.0, 4.0]]), m(&[[0.0, -4.0], [2.0, 0.0]]), Verdict::Inequivalent),
    ]
}

#[test]
fn classification_at_depth_40() {
    let cfg = EquivConfig::default();
    for (a, b, want) in pairs() {
        let v = decide_equivalence(&a, &b, 40, &cfg).unwrap();
        eprintln!(
            "{:?} {:?} slopes {:?} covers {:?}",
            want,
            v.verdict,
            v.half_slopes,
            v.cover_doublings.iter().map(|s| (s.max_j, s.max_i)).collect::<Vec<_>>()
        );
        assert_eq!(v.verdict, want);
        assert_eq!(v.power_verdict, v.cover_verdict);
    }
}

#[test]
fn symmetric_and_adjoint() {
    let cfg = EquivConfig::default();
    for (a, b, want) in pairs() {
        assert_eq!(decide_equivalence(&b, &a, 40, &cfg).unwrap().verdict, want);
        let ad = adjoint_consistency(&a, &b, 40, &cfg).unwrap();
        assert!(ad.agree && !ad.skipped);
    }
}

#[test]
fn det_quotient_equivalent_pair_stable() {
    let a = m(&[[2.0, 0.0], [0.0, 2.0]]);
    let b = m(&[[0.0, -2.0], [2.0, 0.0]]);
    let q: Vec<f64> = [10, 20, 40]
        .iter()
        .map(|&k| det_quotient_bound(&a, &b, k, Default::default()).unwrap().c)
        .collect();
    assert!(q.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-9), "{q:?}");
}

#[test]
fn inclusion_window_equivalent_pair() {
    let a = m(&[[2.0, 0.0], [0.0, 2.0]]);
    let b = m(&[[3.0, 0.0], [0.0, 3.0]]);
    let c = weight_constant(&a, &b, 1.0, 1.0, 30, Default::default()).unwrap();
    let w = inclusion_window(&a, &b, 1.0, 1.0, c, 30, Default::default()).unwrap();
    assert!(w.verified, "{w:?}");
    // a too small C violates the hypothesis
    assert!(matches!(
        inclusion_window(&a, &b, 1.0, 1.0, 1.0, 30, Default::default()),
        Err(aniso_tl::Error::Hypothesis(_, _))
    ));
    // doubling C moves N by at most ⌈ln 2/ln|det A|⌉ + 1
    let (n1, _) = window_constants(&a, &b, 1.0, 1.0, c);
    let (m1, _) = window_constants(&a, &b, 1.0, 1.0, 2.0 * c);
    assert!(m1 - n1 <= (2f64.ln() / 4f64.ln()).ceil() as i64 + 1);
}
