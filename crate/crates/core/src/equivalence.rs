//! Numerical equivalence decisions for pairs of expansive matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covers::{intersection_sets, BumpShape, CoverPair, FourierProfile};
use crate::error::{Error, Result};
use crate::linalg::{ExpansiveMatrix, PowerCache};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Equivalent,
    Inequivalent,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct EquivConfig {
    pub slope_tol: f64,
    pub cover_cap: usize,
    pub doublings: u32,
    pub shape: BumpShape,
}

impl Default for EquivConfig {
    fn default() -> Self {
        Self { slope_tol: 0.02, cover_cap: 64, doublings: 3, shape: BumpShape::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoverStat {
    pub range: i64,
    pub max_j: usize,
    pub max_i: usize,
}

impl CoverStat {
    pub fn total(&self) -> usize {
        self.max_j + self.max_i
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EquivalenceVerdict {
    pub verdict: Verdict,
    pub c_exponent: f64,
    /// (k, ln s_k) with s_k = ‖A^{-k} B^{⌊ck⌋}‖₂
    pub power_norm_table: Vec<(i64, f64)>,
    /// max of the two half-range slopes
    pub growth_slope: f64,
    pub half_slopes: (f64, f64),
    /// (max |J_i|, max |I_j|) at the full range
    pub cover_stats: (usize, usize),
    pub cover_doublings: Vec<CoverStat>,
    pub power_verdict: Verdict,
    pub cover_verdict: Verdict,
    pub sweep_range: i64,
    pub slope_tol: f64,
    pub cover_cap: usize,
}

pub fn c_exponent(a: &ExpansiveMatrix, b: &ExpansiveMatrix) -> f64 {
    a.ln_det() / b.ln_det()
}

/// ln ‖A^{-k} B^{⌊ck⌋}‖ for k ∈ [−K, K].
pub fn power_norm_table(a: &ExpansiveMatrix, b: &ExpansiveMatrix, k: i64) -> Vec<(i64, f64)> {
    let c = c_exponent(a, b);
    let pa = PowerCache::new(a.entries(), a.inverse());
    let pb = PowerCache::new(b.entries(), b.inverse());
    (-k..=k)
        .into_par_iter()
        .map(|t| {
            let m = pa.power(-t).mul(&pb.power((c * t as f64).floor() as i64));
            (t, m.ln_norm())
        })
        .collect()
}

/// Least-squares slope of y against x.
pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn half_slopes(table: &[(i64, f64)]) -> (f64, f64) {
    let neg: Vec<(f64, f64)> = table.iter().filter(|p| p.0 <= 0).map(|p| ((-p.0) as f64, p.1)).collect();
    let pos: Vec<(f64, f64)> = table.iter().filter(|p| p.0 >= 0).map(|p| (p.0 as f64, p.1)).collect();
    (ls_slope(&neg), ls_slope(&pos))
}

/// Cover statistics (max |J_i|, max |I_j|) for i ∈ [−r, r] and j ∈ [−⌈c r⌉, ⌈c r⌉].
pub fn cover_stat(qa: &FourierProfile, pb: &FourierProfile, r: i64) -> Result<CoverStat> {
    let c = qa.dual().ln_det() / pb.dual().ln_det();
    let rj = (c * r as f64).ceil() as i64;
    let s = intersection_sets(qa, pb, (-r, r), (-rj, rj))?;
    Ok(CoverStat { range: r, max_j: s.max_j(), max_i: s.max_i() })
}

pub fn decide_equivalence(a: &ExpansiveMatrix, b: &ExpansiveMatrix, k: i64, cfg: &EquivConfig) -> Result<EquivalenceVerdict> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(a.dim(), b.dim()));
    }
    if k < 1 << cfg.doublings {
        return Err(Error::Param(format!("sweep depth {k} too small for {} doublings", cfg.doublings)));
    }
    let table = power_norm_table(a, b, k);
    let (sn, sp) = half_slopes(&table);
    let growth = sn.max(sp);
    let power_verdict = if growth < cfg.slope_tol {
        Verdict::Equivalent
    } else {
        Verdict::Inequivalent
    };

    let qa = FourierProfile::new(a, cfg.shape)?;
    let pb = FourierProfile::new(b, cfg.shape)?;
    let ranges: Vec<i64> = (0..=cfg.doublings).rev().map(|s| (k >> s).max(1)).collect();
    let stats = ranges.iter().map(|&r| cover_stat(&qa, &pb, r)).collect::<Result<Vec<_>>>()?;
    let increasing = stats.windows(2).all(|w| w[1].total() > w[0].total());
    let last = stats.last().unwrap();
    let cover_verdict = if increasing {
        Verdict::Inequivalent
    } else if last.total() <= cfg.cover_cap {
        Verdict::Equivalent
    } else {
        Verdict::Inconclusive
    };
    let verdict = if power_verdict == cover_verdict { power_verdict } else { Verdict::Inconclusive };
    Ok(EquivalenceVerdict {
        verdict,
        c_exponent: c_exponent(a, b),
        power_norm_table: table,
        growth_slope: growth,
        half_slopes: (sn, sp),
        cover_stats: (last.max_j, last.max_i),
        cover_doublings: stats,
        power_verdict,
        cover_verdict,
        sweep_range: k,
        slope_tol: cfg.slope_tol,
        cover_cap: cfg.cover_cap,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdjointCheck {
    pub agree: bool,
    pub skipped: bool,
    pub direct: Verdict,
    pub adjoint: Verdict,
}

pub fn adjoint_consistency(a: &ExpansiveMatrix, b: &ExpansiveMatrix, k: i64, cfg: &EquivConfig) -> Result<AdjointCheck> {
    let direct = decide_equivalence(a, b, k, cfg)?.verdict;
    let adjoint = decide_equivalence(&a.transpose(), &b.transpose(), k, cfg)?.verdict;
    let skipped = direct == Verdict::Inconclusive || adjoint == Verdict::Inconclusive;
    Ok(AdjointCheck { agree: skipped || direct == adjoint, skipped, direct, adjoint })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DetQuotient {
    /// (range, C) for ranges K/4, K/2, K
    pub by_range: Vec<(i64, f64)>,
    pub c: f64,
    pub unbounded: bool,
}

/// max |det A|^{αi}/|det B|^{βj} (two-sided) over intersecting pairs with |i| ≤ r, in log form.
fn ln_weight_quotient(cp: &CoverPair, la: f64, lb: f64, alpha: f64, beta: f64, r: i64) -> (f64, Option<(i64, i64)>) {
    let parts: Vec<(f64, Option<(i64, i64)>)> = (-r..=r)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0, None);
            if let Some((j0, j1)) = cp.j_interval(i) {
                for j in [j0, j1] {
                    let v = (alpha * i as f64 * la - beta * j as f64 * lb).abs();
                    if v > best.0 {
                        best = (v, Some((i, j)));
                    }
                }
            }
            best
        })
        .collect();
    parts.into_iter().fold((0.0, None), |acc, p| if p.0 > acc.0 { p } else { acc })
}

pub fn det_quotient_bound(a: &ExpansiveMatrix, b: &ExpansiveMatrix, k: i64, shape: BumpShape) -> Result<DetQuotient> {
    let qa = FourierProfile::new(a, shape)?;
    let pb = FourierProfile::new(b, shape)?;
    let cp = CoverPair::new(&qa, &pb)?;
    let by_range: Vec<(i64, f64)> = [k / 4, k / 2, k]
        .iter()
        .map(|&r| (r, ln_weight_quotient(&cp, a.ln_det(), b.ln_det(), 1.0, 1.0, r.max(1)).0.exp()))
        .collect();
    let unbounded = by_range.windows(2).all(|w| w[1].1 > w[0].1 * (1.0 + 1e-9));
    Ok(DetQuotient { c: by_range.last().unwrap().1, by_range, unbounded })
}

/// Smallest C with (1/C)|det B|^{βj} ≤ |det A|^{αi} ≤ C|det B|^{βj} over intersecting pairs, |i| ≤ K.
pub fn weight_constant(a: &ExpansiveMatrix, b: &ExpansiveMatrix, alpha: f64, beta: f64, k: i64, shape: BumpShape) -> Result<f64> {
    let qa = FourierProfile::new(a, shape)?;
    let pb = FourierProfile::new(b, shape)?;
    let cp = CoverPair::new(&qa, &pb)?;
    Ok(ln_weight_quotient(&cp, a.ln_det(), b.ln_det(), alpha, beta, k).0.exp())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InclusionWindow {
    pub n: i64,
    pub n1: i64,
    pub n2: i64,
    pub verified: bool,
    /// largest observed |j − ⌊(α/β) c i⌋| over the sweep
    pub observed: i64,
}

/// The explicit constants N₁ = ⌈ln C/(|α| ln|det A|)⌉ + 1, N₂ likewise with β and B.
pub fn window_constants(a: &ExpansiveMatrix, b: &ExpansiveMatrix, alpha: f64, beta: f64, c: f64) -> (i64, i64) {
    let n1 = (c.ln() / (alpha.abs() * a.ln_det())).ceil() as i64 + 1;
    let n2 = (c.ln() / (beta.abs() * b.ln_det())).ceil() as i64 + 1;
    (n1, n2)
}

pub fn inclusion_window(a: &ExpansiveMatrix, b: &ExpansiveMatrix, alpha: f64, beta: f64, c: f64, k: i64, shape: BumpShape) -> Result<InclusionWindow> {
    if alpha == 0.0 || beta == 0.0 {
        return Err(Error::Param("alpha and beta must be nonzero".into()));
    }
    if !(c >= 1.0) {
        return Err(Error::Param(format!("C = {c} must be >= 1")));
    }
    let qa = FourierProfile::new(a, shape)?;
    let pb = FourierProfile::new(b, shape)?;
    let cp = CoverPair::new(&qa, &pb)?;
    let (lq, at) = ln_weight_quotient(&cp, a.ln_det(), b.ln_det(), alpha, beta, k);
    if lq > c.ln() + 1e-9 {
        let (i, j) = at.unwrap();
        return Err(Error::Hypothesis(i, j));
    }
    let (n1, n2) = window_constants(a, b, alpha, beta, c);
    let n = n1.max(n2);
    let slope = alpha / beta * c_exponent(a, b);
    let observed = (-k..=k)
        .into_par_iter()
        .map(|i| {
            let center = (slope * i as f64).floor() as i64;
            cp.j_interval(i).map_or(0, |(j0, j1)| (j0 - center).abs().max((j1 - center).abs()))
        })
        .reduce(|| 0, i64::max);
    Ok(InclusionWindow { n, n1, n2, verified: observed <= n, observed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_examples() {
        let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
        let b = ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap();
        assert!((c_exponent(&a, &b) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c_exponent(&b, &a) - 1.5).abs() < 1e-15);
        assert_eq!(c_exponent(&a, &a), 1.0);
    }

    #[test]
    fn window_constant_c1() {
        let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
        assert_eq!(window_constants(&a, &a, 1.0, 1.0, 1.0), (1, 1));
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 0.3 * k as f64 + 1.0)).collect();
        assert!((ls_slope(&pts) - 0.3).abs() < 1e-12);
    }
}
