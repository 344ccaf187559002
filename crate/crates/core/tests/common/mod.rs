#![allow(dead_code)]

use aniso_tl::linalg::ExpansiveMatrix;
use proptest::prelude::*;

pub fn m2(rows: [[f64; 2]; 2]) -> ExpansiveMatrix {
    ExpansiveMatrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]).unwrap()
}

pub fn battery() -> Vec<ExpansiveMatrix> {
    vec![
        ExpansiveMatrix::scalar(2, 2.0).unwrap(),
        ExpansiveMatrix::scalar(2, 3.0).unwrap(),
        ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap(),
        m2([[2.0, 1.0], [0.0, 2.0]]),
        m2([[0.0, -2.0], [2.0, 0.0]]),
        ExpansiveMatrix::diag(&[2.0, 3.0, 5.0]).unwrap(),
    ]
}

/// R(t) T R(t)ᵀ with T upper triangular and |diagonal| in [1.2, 4], or a scaled rotation.
pub fn expansive_2x2() -> impl Strategy<Value = ExpansiveMatrix> {
    let tri = (1.2f64..4.0, 1.2f64..4.0, any::<bool>(), any::<bool>(), -2.0f64..2.0, 0.0f64..std::f64::consts::PI).prop_map(|(a, b, sa, sb, s, t)| {
        let a = if sa { -a } else { a };
        let b = if sb { -b } else { b };
        let (c, n) = (t.cos(), t.sin());
        // R T Rᵀ
        let r = [[c, -n], [n, c]];
        let tm = [[a, s], [0.0, b]];
        let mut rt = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                rt[i][j] = (0..2).map(|k| r[i][k] * tm[k][j]).sum();
            }
        }
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = (0..2).map(|k| rt[i][k] * r[j][k]).sum();
            }
        }
        m2(out)
    });
    let rot = (1.2f64..4.0, 0.0f64..std::f64::consts::TAU).prop_map(|(s, t)| m2([[s * t.cos(), -s * t.sin()], [s * t.sin(), s * t.cos()]]));
    prop_oneof![3 => tri, 1 => rot]
}
