//! The step homogeneous quasi-norm ρ_A(x) = |det A|^i on A^{i+1}Ω \ A^iΩ.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dilation_exponents, Dilation, ExpansiveMatrix};
use crate::sampling;

/// Scale indices are searched in |i| ≤ SCALE_WINDOW.
pub const SCALE_WINDOW: i64 = 1_000_000;
const CHUNK: usize = 512;

#[derive(Clone, Debug)]
pub struct StepQuasiNorm {
    dil: Dilation,
    ln_expand: f64,
    ln_theta: f64,
}

impl StepQuasiNorm {
    pub fn new(dil: Dilation) -> Self {
        let ln_expand = dil.expansion().ln();
        let ln_theta = dil.ellipsoid.theta().ln();
        Self { dil, ln_expand, ln_theta }
    }

    pub fn from_matrix(a: ExpansiveMatrix) -> Result<Self> {
        Ok(Self::new(Dilation::new(a, None)?))
    }

    pub fn dilation(&self) -> &Dilation {
        &self.dil
    }
    pub fn matrix(&self) -> &ExpansiveMatrix {
        &self.dil.matrix
    }
    pub fn dim(&self) -> usize {
        self.dil.dim()
    }

    /// ln |A^{-i} x|_Ω for x given in Ω-coordinates.
    fn level(&self, y: &DVector<f64>, i: i64) -> f64 {
        let s = y.amax();
        let (v, ls) = self.dil.conj_powers().apply(-i, &(y / s));
        let ls = ls + s.ln();
        v.norm().ln() + ls
    }

    /// The unique i with x ∈ A^{i+1}Ω and x ∉ A^iΩ.
    pub fn scale_index(&self, x: &[f64]) -> Result<i64> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch(x.len(), self.dim()));
        }
        if x.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroPoint);
        }
        let y = self.dil.ellipsoid.factor() * DVector::from_row_slice(x);
        let s = y.amax();
        let g = s.ln() + (&y / s).norm().ln();
        if !g.is_finite() {
            return Err(Error::ScaleWindow(SCALE_WINDOW));
        }
        // ln|A^{-i}y| lies in [g - i ln‖A‖, g + i ln θ] for i ≥ 0 (and mirrored for i < 0)
        let (mut lo, mut hi) = if g >= 0.0 {
            ((g / self.ln_expand).floor() as i64 - 1, (g / -self.ln_theta).ceil() as i64 + 1)
        } else {
            ((g / -self.ln_theta).floor() as i64 - 1, (g / self.ln_expand).ceil() as i64 + 1)
        };
        if lo < -SCALE_WINDOW - 2 || hi > SCALE_WINDOW + 2 {
            return Err(Error::ScaleWindow(SCALE_WINDOW));
        }
        // widen until f(lo) ≥ 0 > f(hi)
        while self.level(&y, lo) < 0.0 {
            lo -= (hi - lo).max(1);
            if lo < -SCALE_WINDOW - 2 {
                return Err(Error::ScaleWindow(SCALE_WINDOW));
            }
        }
        while self.level(&y, hi) >= 0.0 {
            hi += (hi - lo).max(1);
            if hi > SCALE_WINDOW + 2 {
                return Err(Error::ScaleWindow(SCALE_WINDOW));
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.level(&y, mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo.abs() > SCALE_WINDOW {
            return Err(Error::ScaleWindow(SCALE_WINDOW));
        }
        Ok(lo)
    }

    pub fn rho(&self, x: &[f64]) -> Result<f64> {
        if x.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        Ok(self.dil.det_abs().powf(self.scale_index(x)? as f64))
    }

    /// ln ρ(x); −∞ at 0.
    pub fn ln_rho(&self, x: &[f64]) -> Result<f64> {
        if x.iter().all(|v| *v == 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.scale_index(x)? as f64 * self.dil.ln_det())
    }

    /// A point of A^{i}(AΩ \ Ω) chosen at random: direction uniform in Ω-coordinates,
    /// Ω-radius uniform in [1, ‖A‖_Ω).
    pub fn sample_at_scale<R: Rng>(&self, r: &mut R, i: i64) -> Vec<f64> {
        let d = self.dim();
        let z = sampling::direction(r, d);
        let s = 1.0 + r.random::<f64>() * (self.ln_expand.exp() - 1.0);
        let w = self.dil.ellipsoid.factor_inv() * DVector::from_vec(z) * s;
        let (v, ls) = self.dil.powers().apply(i, &w);
        (v * ls.exp()).iter().copied().collect()
    }
}

/// max ρ(x+y)/(ρ(x)+ρ(y)) over a seeded sample at scales in [−20, 20].
pub fn quasi_triangle_constant(q: &StepQuasiNorm, n_samples: usize, seed: u64) -> f64 {
    let ln_det = q.dil.ln_det();
    let per_chunk: Vec<f64> = sampling::chunk_ranges(n_samples, CHUNK)
        .into_par_iter()
        .enumerate()
        .map(|(c, range)| {
            let mut r = sampling::rng(seed, c as u64);
            let mut best = 0.0f64;
            for _ in range {
                let i = r.random_range(-20..=20);
                let j = r.random_range(-20..=20);
                let x = q.sample_at_scale(&mut r, i);
                let y = q.sample_at_scale(&mut r, j);
                let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                let (Ok(a), Ok(b), Ok(k)) = (q.scale_index(&x), q.scale_index(&y), q.scale_index(&s)) else {
                    continue;
                };
                if s.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let m = a.max(b) as f64;
                let den = ((a as f64 - m) * ln_det).exp() + ((b as f64 - m) * ln_det).exp();
                best = best.max(((k as f64 - m) * ln_det).exp() / den);
            }
            best
        })
        .collect();
    per_chunk.into_iter().fold(0.0, f64::max)
}

/// Empirical (min, max) of ρ_B(x)/ρ_A(x) over points at A-scales in [−range, range].
pub fn equivalence_ratio(qa: &StepQuasiNorm, qb: &StepQuasiNorm, n_samples: usize, range: i64, seed: u64) -> Result<(f64, f64)> {
    if qa.dim() != qb.dim() {
        return Err(Error::DimMismatch(qa.dim(), qb.dim()));
    }
    let (la, lb) = (qa.dil.ln_det(), qb.dil.ln_det());
    let parts: Vec<(f64, f64)> = sampling::chunk_ranges(n_samples, CHUNK)
        .into_par_iter()
        .enumerate()
        .map(|(c, rg)| {
            let mut r = sampling::rng(seed, c as u64);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for _ in rg {
                let i = r.random_range(-range..=range);
                let x = qa.sample_at_scale(&mut r, i);
                if let (Ok(a), Ok(b)) = (qa.scale_index(&x), qb.scale_index(&x)) {
                    let v = b as f64 * lb - a as f64 * la;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            (lo, hi)
        })
        .collect();
    let (lo, hi) = parts.into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
    Ok((lo.exp(), hi.exp()))
}

/// Smallest C with (1/C)ρ^{ζ₋} ≤ |x| ≤ Cρ^{ζ₊} (ρ ≥ 1, flipped for ρ < 1), over
/// points log-uniform in |x| ∈ [1e-4, 1e4].
pub fn exponent_constant(q: &StepQuasiNorm, n_samples: usize, seed: u64) -> Result<f64> {
    let e = dilation_exponents(q.matrix(), 0.5)?;
    let d = q.dim();
    let parts: Vec<f64> = sampling::chunk_ranges(n_samples, CHUNK)
        .into_par_iter()
        .enumerate()
        .map(|(c, rg)| {
            let mut r = sampling::rng(seed, c as u64);
            let mut best = 0.0f64;
            for _ in rg {
                let t = 10f64.powf(r.random_range(-4.0..4.0));
                let x: Vec<f64> = sampling::direction(&mut r, d).into_iter().map(|v| v * t).collect();
                let Ok(lr) = q.ln_rho(&x) else { continue };
                let ln_x = t.ln();
                let (zl, zu) = if lr >= 0.0 { (e.zeta_minus, e.zeta_plus) } else { (e.zeta_plus, e.zeta_minus) };
                // (1/C) ρ^{zl} ≤ |x| ≤ C ρ^{zu}
                best = best.max(zl * lr - ln_x).max(ln_x - zu * lr);
            }
            best
        })
        .collect();
    Ok(parts.into_iter().fold(0.0, f64::max).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: ExpansiveMatrix) -> StepQuasiNorm {
        StepQuasiNorm::from_matrix(a).unwrap()
    }

    #[test]
    fn disk_example() {
        let q = q(ExpansiveMatrix::scalar(2, 2.0).unwrap());
        let pi = std::f64::consts::PI;
        assert_eq!(q.scale_index(&[2.0 / pi.sqrt() * 1.001, 0.0]).unwrap(), 1);
        assert_eq!(q.scale_index(&[2.0 / pi.sqrt() * 0.999, 0.0]).unwrap(), 0);
        assert_eq!(q.rho(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(q.rho(&[0.7 / pi.sqrt(), 0.0]).unwrap(), 0.25);
        assert!(matches!(q.scale_index(&[0.0, 0.0]), Err(Error::ZeroPoint)));
    }

    #[test]
    fn extreme_points() {
        let q = q(ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap());
        let i = q.scale_index(&[1e300, 0.0]).unwrap();
        assert!(i > 900 && i < 1100, "{i}");
        let j = q.scale_index(&[0.0, 1e-300]).unwrap();
        assert!(j < -400 && j > -600, "{j}");
    }

    #[test]
    fn triangle_constant_basic() {
        let q = q(ExpansiveMatrix::scalar(2, 2.0).unwrap());
        let c = quasi_triangle_constant(&q, 2000, 1);
        assert!(c >= 0.5 && c < 10.0, "{c}");
    }
}
