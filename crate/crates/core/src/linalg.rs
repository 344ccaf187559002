//! Expansive matrices, dilation exponents and the expansive ellipsoid.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalue moduli must exceed `1 + TOL_EIG`.
pub const TOL_EIG: f64 = 1e-9;
/// Largest supported dimension.
pub const MAX_DIM: usize = 8;
const COND_MIN: f64 = 1e-13;
const SERIES_TOL: f64 = 1e-12;
const K_MAX: usize = 10_000;

/// A real invertible matrix whose eigenvalues all have modulus > 1.
#[derive(Clone, Debug)]
pub struct ExpansiveMatrix {
    dim: usize,
    entries: DMatrix<f64>,
    inverse: DMatrix<f64>,
    det_abs: f64,
    eig_moduli: Vec<f64>,
}

impl PartialEq for ExpansiveMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

/// Certify `m` as expansive.
pub fn certify_expansive(m: &DMatrix<f64>) -> Result<ExpansiveMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let d = m.nrows();
    if d == 0 || d > MAX_DIM {
        return Err(Error::Dimension(d));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Param("non-finite matrix entry".into()));
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 || smin / smax < COND_MIN {
        return Err(Error::Singular(if smax == 0.0 { f64::INFINITY } else { smax / smin }));
    }
    let mut eig_moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    eig_moduli.sort_by(|a, b| a.total_cmp(b));
    if let Some(&bad) = eig_moduli.iter().find(|&&r| r <= 1.0 + TOL_EIG) {
        return Err(Error::NotExpansive { modulus: bad });
    }
    let det_abs = m.determinant().abs();
    let inverse = m.clone().try_inverse().ok_or(Error::Singular(f64::INFINITY))?;
    Ok(ExpansiveMatrix { dim: d, entries: m.clone(), inverse, det_abs, eig_moduli })
}

impl ExpansiveMatrix {
    /// Build from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(Error::Parse("ragged matrix rows".into()));
        }
        certify_expansive(&DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    /// Whitespace-separated rows, one per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = vec![];
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("line {}: not a number: {t}", n + 1))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty matrix".into()));
        }
        Self::from_rows(&rows)
    }

    pub fn to_text(&self) -> String {
        self.rows().iter().map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ") + "\n").collect()
    }

    pub fn scalar(d: usize, s: f64) -> Result<Self> {
        certify_expansive(&(DMatrix::identity(d, d) * s))
    }

    pub fn diag(v: &[f64]) -> Result<Self> {
        certify_expansive(&DMatrix::from_diagonal(&DVector::from_row_slice(v)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }
    pub fn det_abs(&self) -> f64 {
        self.det_abs
    }
    pub fn ln_det(&self) -> f64 {
        self.det_abs.ln()
    }
    pub fn eig_moduli(&self) -> &[f64] {
        &self.eig_moduli
    }
    pub fn min_modulus(&self) -> f64 {
        self.eig_moduli[0]
    }
    pub fn max_modulus(&self) -> f64 {
        *self.eig_moduli.last().unwrap()
    }
    /// ρ(A⁻¹)
    pub fn inv_spectral_radius(&self) -> f64 {
        1.0 / self.min_modulus()
    }

    /// A* (real transpose).
    pub fn transpose(&self) -> ExpansiveMatrix {
        ExpansiveMatrix {
            dim: self.dim,
            entries: self.entries.transpose(),
            inverse: self.inverse.transpose(),
            det_abs: self.det_abs,
            eig_moduli: self.eig_moduli.clone(),
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.entries.row(i).iter().copied().collect()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationExponents {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub zeta_minus: f64,
    pub zeta_plus: f64,
}

pub fn dilation_exponents(a: &ExpansiveMatrix, margin: f64) -> Result<DilationExponents> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::Param(format!("margin {margin} outside (0,1)")));
    }
    let lambda_minus = 1.0 + (1.0 - margin) * (a.min_modulus() - 1.0);
    let lambda_plus = a.max_modulus() / (1.0 - margin);
    let ld = a.ln_det();
    Ok(DilationExponents {
        lambda_minus,
        lambda_plus,
        zeta_minus: lambda_minus.ln() / ld,
        zeta_plus: lambda_plus.ln() / ld,
    })
}

/// Matrix stored as `mant * exp(log_scale)`, so that huge powers stay finite.
#[derive(Clone, Debug)]
pub struct ScaledMatrix {
    pub mant: DMatrix<f64>,
    pub log_scale: f64,
}

impl ScaledMatrix {
    pub fn new(m: DMatrix<f64>) -> Self {
        Self { mant: m, log_scale: 0.0 }.normalized()
    }

    pub fn identity(d: usize) -> Self {
        Self { mant: DMatrix::identity(d, d), log_scale: 0.0 }
    }

    fn normalized(mut self) -> Self {
        let s = self.mant.amax();
        if s > 0.0 && s.is_finite() {
            self.mant /= s;
            self.log_scale += s.ln();
        }
        self
    }

    pub fn mul(&self, o: &ScaledMatrix) -> ScaledMatrix {
        ScaledMatrix { mant: &self.mant * &o.mant, log_scale: self.log_scale + o.log_scale }.normalized()
    }

    pub fn lmul_plain(&self, m: &DMatrix<f64>) -> ScaledMatrix {
        ScaledMatrix { mant: m * &self.mant, log_scale: self.log_scale }.normalized()
    }

    pub fn rmul_plain(&self, m: &DMatrix<f64>) -> ScaledMatrix {
        ScaledMatrix { mant: &self.mant * m, log_scale: self.log_scale }.normalized()
    }

    /// ln of the largest singular value.
    pub fn ln_norm(&self) -> f64 {
        self.mant.clone().singular_values().max().ln() + self.log_scale
    }

    /// ln of (smallest, largest) singular value.
    pub fn ln_singular_range(&self) -> (f64, f64) {
        let sv = self.mant.clone().singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        let ln_lo = if lo > hi * 1e-13 {
            lo.ln()
        } else {
            // ill conditioned mantissa: fall back on the inverse
            match self.mant.clone().try_inverse() {
                Some(inv) => -inv.singular_values().max().ln(),
                None => f64::NEG_INFINITY,
            }
        };
        (ln_lo + self.log_scale, hi.ln() + self.log_scale)
    }

    pub fn to_plain(&self) -> DMatrix<f64> {
        &self.mant * self.log_scale.exp()
    }
}

/// Cached binary powers `M^{±2^k}` for fast evaluation of `M^n`.
#[derive(Clone, Debug)]
pub struct PowerCache {
    pos: Vec<ScaledMatrix>,
    neg: Vec<ScaledMatrix>,
    dim: usize,
}

const CACHE_BITS: usize = 41;

impl PowerCache {
    pub fn new(m: &DMatrix<f64>, inv: &DMatrix<f64>) -> Self {
        let mut pos = vec![ScaledMatrix::new(m.clone())];
        let mut neg = vec![ScaledMatrix::new(inv.clone())];
        for k in 1..CACHE_BITS {
            pos.push(pos[k - 1].mul(&pos[k - 1]));
            neg.push(neg[k - 1].mul(&neg[k - 1]));
        }
        Self { pos, neg, dim: m.nrows() }
    }

    pub fn power(&self, n: i64) -> ScaledMatrix {
        let mut out = ScaledMatrix::identity(self.dim);
        let table = if n >= 0 { &self.pos } else { &self.neg };
        let mut e = n.unsigned_abs();
        let mut k = 0;
        while e > 0 {
            if e & 1 == 1 {
                out = out.mul(&table[k]);
            }
            e >>= 1;
            k += 1;
        }
        out
    }

    /// `M^n x` as (unit-ish vector, log scale).
    pub fn apply(&self, n: i64, x: &DVector<f64>) -> (DVector<f64>, f64) {
        let table = if n >= 0 { &self.pos } else { &self.neg };
        let mut v = x.clone();
        let mut ls = 0.0;
        let mut e = n.unsigned_abs();
        let mut k = 0;
        while e > 0 {
            if e & 1 == 1 {
                v = &table[k].mant * v;
                ls += table[k].log_scale;
                let s = v.amax();
                if s > 0.0 {
                    v /= s;
                    ls += s.ln();
                }
            }
            e >>= 1;
            k += 1;
        }
        (v, ls)
    }
}

/// The expansive ellipsoid Ω = {x : xᵀSx < c}, vol Ω = 1, with ‖A⁻¹‖_S ≤ θ = 1/r.
#[derive(Clone, Debug)]
pub struct Ellipsoid {
    form: DMatrix<f64>,
    level: f64,
    theta: f64,
    terms: usize,
    /// Ln with |x|_Ω = |Ln x| and Ω = {|x|_Ω < 1}.
    factor: DMatrix<f64>,
    factor_inv: DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EllipsoidRecord {
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    pub c: f64,
    pub r: f64,
    pub theta: f64,
}

/// Volume of the Euclidean unit ball in ℝ^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h + 1.0)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

pub fn build_ellipsoid(a: &ExpansiveMatrix, theta: Option<f64>) -> Result<Ellipsoid> {
    let rho = a.inv_spectral_radius();
    let theta = theta.unwrap_or((1.0 + rho) / 2.0);
    if !(theta > rho && theta < 1.0) {
        return Err(Error::ThetaRange { theta, lo: rho });
    }
    let d = a.dim();
    let step = a.inverse() / theta;
    let mut p = DMatrix::<f64>::identity(d, d);
    let mut s = DMatrix::<f64>::identity(d, d);
    let mut prev = 1.0;
    let q_floor = (rho / theta).powi(2);
    let mut terms = 1;
    loop {
        if terms > K_MAX {
            return Err(Error::SeriesDiverged(K_MAX));
        }
        p = &step * p;
        let t = p.transpose() * &p;
        s += &t;
        terms += 1;
        let tn = spectral_norm(&t);
        let q = (tn / prev).max(q_floor);
        prev = tn;
        if terms > 4 && q < 1.0 && tn * q / (1.0 - q) < SERIES_TOL * spectral_norm(&s) {
            break;
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let chol = s.clone().cholesky().ok_or_else(|| Error::Param("form not positive definite".into()))?;
    let upper = chol.l().transpose();
    let level = (s.determinant().sqrt() / unit_ball_volume(d)).powf(2.0 / d as f64);
    let factor = upper / level.sqrt();
    let factor_inv = factor.clone().try_inverse().ok_or(Error::Singular(f64::INFINITY))?;
    let e = Ellipsoid { form: s, level, theta, terms, factor, factor_inv };
    let contraction = e.contraction(a);
    if contraction > theta * (1.0 + 1e-9) {
        return Err(Error::Certificate { norm: contraction, theta });
    }
    Ok(e)
}

impl Ellipsoid {
    pub fn form(&self) -> &DMatrix<f64> {
        &self.form
    }
    pub fn level(&self) -> f64 {
        self.level
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn r(&self) -> f64 {
        1.0 / self.theta
    }
    pub fn terms(&self) -> usize {
        self.terms
    }
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }
    pub fn factor_inv(&self) -> &DMatrix<f64> {
        &self.factor_inv
    }
    pub fn dim(&self) -> usize {
        self.form.nrows()
    }

    /// |x|_Ω, so that Ω is the open unit ball of this norm.
    pub fn norm(&self, x: &[f64]) -> f64 {
        let v = &self.factor * DVector::from_row_slice(x);
        v.norm()
    }

    /// Strict membership xᵀSx < c.
    pub fn contains(&self, x: &[f64]) -> bool {
        let v = DVector::from_row_slice(x);
        (v.transpose() * &self.form * &v)[(0, 0)] < self.level
    }

    /// Volume c^{d/2} vol(B) / √det S.
    pub fn volume(&self) -> f64 {
        let d = self.dim();
        self.level.powf(d as f64 / 2.0) * unit_ball_volume(d) / self.form.determinant().sqrt()
    }

    /// ‖A⁻¹‖ in the Ω-norm.
    pub fn contraction(&self, a: &ExpansiveMatrix) -> f64 {
        spectral_norm(&(&self.factor * a.inverse() * &self.factor_inv))
    }

    /// ‖M‖ in the Ω-norm for an arbitrary matrix.
    pub fn operator_norm(&self, m: &DMatrix<f64>) -> f64 {
        spectral_norm(&(&self.factor * m * &self.factor_inv))
    }

    /// Conjugate Ln · M · Ln⁻¹ of a scaled matrix.
    pub fn conjugate(&self, m: &ScaledMatrix) -> ScaledMatrix {
        m.lmul_plain(&self.factor).rmul_plain(&self.factor_inv)
    }

    /// Semi-axes of Ω (Euclidean), ascending.
    pub fn semi_axes(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.factor.clone().singular_values().iter().map(|s| 1.0 / s).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn record(&self) -> EllipsoidRecord {
        let d = self.dim();
        EllipsoidRecord {
            s: (0..d).map(|i| self.form.row(i).iter().copied().collect()).collect(),
            c: self.level,
            r: self.r(),
            theta: self.theta,
        }
    }
}

/// Expansive matrix together with its ellipsoid and cached powers.
#[derive(Clone, Debug)]
pub struct Dilation {
    pub matrix: ExpansiveMatrix,
    pub ellipsoid: Ellipsoid,
    powers: PowerCache,
    conj: OnceLock<PowerCache>,
}

impl Dilation {
    pub fn new(matrix: ExpansiveMatrix, theta: Option<f64>) -> Result<Self> {
        let ellipsoid = build_ellipsoid(&matrix, theta)?;
        let powers = PowerCache::new(matrix.entries(), matrix.inverse());
        Ok(Self { matrix, ellipsoid, powers, conj: OnceLock::new() })
    }

    pub fn powers(&self) -> &PowerCache {
        &self.powers
    }

    /// Powers of Ln A Ln⁻¹ (the matrix in Ω-coordinates).
    pub fn conj_powers(&self) -> &PowerCache {
        self.conj.get_or_init(|| {
            let f = self.ellipsoid.factor();
            let fi = self.ellipsoid.factor_inv();
            PowerCache::new(&(f * self.matrix.entries() * fi), &(f * self.matrix.inverse() * fi))
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
    pub fn det_abs(&self) -> f64 {
        self.matrix.det_abs()
    }
    pub fn ln_det(&self) -> f64 {
        self.matrix.ln_det()
    }
    /// ‖A‖ in the Ω-norm.
    pub fn expansion(&self) -> f64 {
        self.ellipsoid.operator_norm(self.matrix.entries())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot(s: f64) -> ExpansiveMatrix {
        ExpansiveMatrix::from_rows(&[vec![0.0, -s], vec![s, 0.0]]).unwrap()
    }

    #[test]
    fn certify_examples() {
        let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
        assert_eq!(a.eig_moduli(), &[2.0, 2.0]);
        match ExpansiveMatrix::diag(&[1.0, 2.0]) {
            Err(Error::NotExpansive { modulus }) => assert!((modulus - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let r = rot(2.0);
        for m in r.eig_moduli() {
            assert!((m - 2.0).abs() < 1e-12);
        }
        let j = ExpansiveMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        for m in j.eig_moduli() {
            assert!((m - 2.0).abs() < 1e-6);
        }
        assert!(matches!(
            certify_expansive(&DMatrix::from_row_slice(2, 3, &[1.0; 6])),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            certify_expansive(&DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 1.0, 2.0])),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn exponents() {
        let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
        let e = dilation_exponents(&a, 0.5).unwrap();
        assert!((e.lambda_minus - 1.5).abs() < 1e-15);
        assert!((e.lambda_plus - 4.0).abs() < 1e-15);
        assert!((e.zeta_minus - 1.5f64.ln() / 4f64.ln()).abs() < 1e-15);
        assert!((e.zeta_plus - 1.0).abs() < 1e-15);
        let b = ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap();
        let e = dilation_exponents(&b, 1e-9).unwrap();
        assert!((e.lambda_minus - 2.0).abs() < 1e-8 && (e.lambda_plus - 4.0).abs() < 1e-8);
    }

    #[test]
    fn disk_for_scalar() {
        let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
        let e = build_ellipsoid(&a, None).unwrap();
        let s = e.form();
        assert!((s[(0, 1)]).abs() < 1e-14 && (s[(0, 0)] - s[(1, 1)]).abs() < 1e-12);
        assert!((e.volume() - 1.0).abs() < 1e-12);
        assert!((e.theta() - 0.75).abs() < 1e-15);
        let ax = e.semi_axes();
        let r0 = 1.0 / std::f64::consts::PI.sqrt();
        assert!((ax[0] - r0).abs() < 1e-12 && (ax[1] - r0).abs() < 1e-12);
    }

    #[test]
    fn diag_ellipse_nesting() {
        let a = ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap();
        let e = build_ellipsoid(&a, None).unwrap();
        // closed form of the diagonal series
        let s = e.form();
        let t2 = e.theta() * e.theta();
        assert!((s[(0, 0)] - 1.0 / (1.0 - 1.0 / (4.0 * t2))).abs() < 1e-11);
        assert!((s[(1, 1)] - 1.0 / (1.0 - 1.0 / (16.0 * t2))).abs() < 1e-11);
        assert!(s[(0, 1)].abs() < 1e-14);
        // rΩ ⊆ AΩ: boundary points of rΩ map under A⁻¹ inside Ω
        let r = e.r();
        let li = e.factor_inv();
        for k in 0..10_000 {
            let t = k as f64 / 10_000.0 * std::f64::consts::TAU;
            let u = li * DVector::from_row_slice(&[t.cos(), t.sin()]) * r;
            let y = a.inverse() * u;
            assert!(e.norm(y.as_slice()) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn scaled_powers_match_plain() {
        let j = ExpansiveMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let pc = PowerCache::new(j.entries(), j.inverse());
        let p = pc.power(5).to_plain();
        let mut q = DMatrix::identity(2, 2);
        for _ in 0..5 {
            q = j.entries() * q;
        }
        assert!((p - q).amax() < 1e-9);
        let m = pc.power(-3).mul(&pc.power(3)).to_plain();
        assert!((m - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        let big = pc.power(2000);
        assert!(big.log_scale.is_finite() && (big.ln_norm() - 2000.0 * 2f64.ln()).abs() < 10.0);
    }

    #[test]
    fn three_dim_volume() {
        let a = ExpansiveMatrix::diag(&[2.0, 3.0, 5.0]).unwrap();
        let e = build_ellipsoid(&a, None).unwrap();
        assert!((e.volume() - 1.0).abs() < 1e-10);
        assert!(e.contraction(&a) <= e.theta() * (1.0 + 1e-9));
    }

    #[test]
    fn theta_out_of_range() {
        let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
        assert!(matches!(build_ellipsoid(&a, Some(0.4)), Err(Error::ThetaRange { .. })));
        assert!(matches!(build_ellipsoid(&a, Some(1.0)), Err(Error::ThetaRange { .. })));
    }
}
