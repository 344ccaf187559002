//! Analyzing profiles on A*-annuli and the intersection index sets J_i, I_j.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Dilation, ExpansiveMatrix, ScaledMatrix};

/// Uniform frequency grid over [−L, L)^d; the dual spatial grid covers [−X, X)^d with X = n/(4L).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub dim: usize,
    pub half_width: f64,
    pub n_per_axis: usize,
}

impl FrequencyGrid {
    pub fn new(dim: usize, half_width: f64, n_per_axis: usize) -> Result<Self> {
        if !n_per_axis.is_power_of_two() || n_per_axis < 64 {
            return Err(Error::Grid(format!("n_per_axis {n_per_axis} must be a power of two >= 64")));
        }
        if !(half_width > 0.0) || !(1..=3).contains(&dim) {
            return Err(Error::Grid(format!("bad grid (d = {dim}, L = {half_width})")));
        }
        Ok(Self { dim, half_width, n_per_axis })
    }
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n_per_axis as f64
    }
    pub fn spatial_half_width(&self) -> f64 {
        self.n_per_axis as f64 / (4.0 * self.half_width)
    }
    pub fn len(&self) -> usize {
        self.n_per_axis.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Frequency of flat index `idx` (row-major, first axis slowest).
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let n = self.n_per_axis;
        let h = self.spacing();
        let mut out = vec![0.0; self.dim];
        let mut r = idx;
        for a in (0..self.dim).rev() {
            out[a] = -self.half_width + (r % n) as f64 * h;
            r /= n;
        }
        out
    }
}

fn e(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for u ≤ 0, 1 for u ≥ 1.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = e(u);
        a / (a + e(1.0 - u))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BumpShape {
    /// Support is (θ^spread, R θ^{-spread}) around the plateau [1, R], R = ‖A*‖ in the ellipsoid norm.
    pub spread: f64,
}

impl Default for BumpShape {
    fn default() -> Self {
        Self { spread: 0.5 }
    }
}

/// φ̂ = ĥ / Σ_m ĥ((A*)^m ·), ĥ(ξ) = g(|ξ|_*), plus a dilation shift and an optional window Σ_{|m|≤N}.
#[derive(Clone, Debug)]
pub struct FourierProfile {
    dual: Dilation,
    lo: f64,
    hi: f64,
    plateau: f64,
    window: i64,
    shape: BumpShape,
    shift: i64,
    sum_n: i64,
}

/// Evaluator of φ̂_i on a fixed dilation.
pub struct ProfileEval<'a> {
    p: &'a FourierProfile,
    /// ξ ↦ Ln (A*)^{-(shift+m)} ξ for each window member m
    maps: Vec<DMatrix<f64>>,
    /// Ln (A*)^k Ln⁻¹ for |k| ≤ W
    steps: Vec<DMatrix<f64>>,
}

impl FourierProfile {
    pub fn new(a: &ExpansiveMatrix, shape: BumpShape) -> Result<Self> {
        if !(shape.spread > 0.0 && shape.spread < 4.0) {
            return Err(Error::Profile(format!("degenerate spread {}", shape.spread)));
        }
        let dual = Dilation::new(a.transpose(), None)?;
        let theta = dual.ellipsoid.theta();
        let plateau = dual.expansion();
        let lo = theta.powf(shape.spread);
        let hi = plateau * theta.powf(-shape.spread);
        let window = ((hi / lo).ln() / (-theta.ln())).ceil() as i64 + 1;
        Ok(Self { dual, lo, hi, plateau, window, shape, shift: 0, sum_n: 0 })
    }

    pub fn dual(&self) -> &Dilation {
        &self.dual
    }
    /// Support radii (lo, hi) of the base profile in the A*-ellipsoid norm.
    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
    pub fn plateau(&self) -> f64 {
        self.plateau
    }
    pub fn window(&self) -> i64 {
        self.window
    }
    pub fn shape(&self) -> BumpShape {
        self.shape
    }
    pub fn shift(&self) -> i64 {
        self.shift
    }
    pub fn sum_width(&self) -> i64 {
        self.sum_n
    }
    pub fn dim(&self) -> usize {
        self.dual.dim()
    }

    /// ρ_{A*}-annulus certificate: Q ⊆ {r_in ≤ ρ_{A*} ≤ r_out}.
    pub fn annulus_certificate(&self) -> (f64, f64) {
        let ln_inv_theta = -self.dual.ellipsoid.theta().ln();
        let k_lo = -(((-self.lo.ln()) / ln_inv_theta).ceil() as i64);
        let k_hi = (self.hi.ln() / ln_inv_theta).floor() as i64;
        let det = self.dual.det_abs();
        (det.powi(k_lo as i32), det.powi(k_hi as i32))
    }

    /// g(t): smooth plateau bump on (lo, hi), 1 on [1, R].
    pub fn g(&self, t: f64) -> f64 {
        if t <= self.lo || t >= self.hi {
            return 0.0;
        }
        smooth_step((t - self.lo) / (1.0 - self.lo)) * smooth_step((self.hi - t) / (self.hi - self.plateau))
    }

    /// The profile for φ_i (frequencies (A*)^i Q).
    pub fn dilate(&self, i: i64) -> FourierProfile {
        let mut p = self.clone();
        p.shift += i;
        p
    }

    /// Φ = Σ_{|m|≤N} φ_m around the current shift.
    pub fn window_sum(&self, n: i64) -> FourierProfile {
        let mut p = self.clone();
        p.sum_n = n;
        p
    }

    pub fn evaluator(&self) -> ProfileEval<'_> {
        let f = self.dual.ellipsoid.factor();
        let maps = (-self.sum_n..=self.sum_n)
            .map(|m| {
                let s = self.dual.powers().power(-(self.shift + m)).lmul_plain(f);
                s.to_plain()
            })
            .collect();
        let cp = self.dual.conj_powers();
        let steps = (-self.window..=self.window).map(|k| cp.power(k).to_plain()).collect();
        ProfileEval { p: self, maps, steps }
    }

    /// φ̂_shift(ξ), one-off evaluation.
    pub fn value(&self, xi: &[f64]) -> f64 {
        self.evaluator().value(xi)
    }

    /// Whether ξ lies in the open support (A*)^{shift}Q (window members included).
    pub fn in_support(&self, xi: &[f64]) -> bool {
        let ev = self.evaluator();
        let x = DVector::from_row_slice(xi);
        ev.maps.iter().any(|m| {
            let r = (m * &x).norm();
            r > self.lo && r < self.hi
        })
    }

    /// Samples on a grid.
    pub fn sample(&self, grid: &FrequencyGrid) -> Vec<f64> {
        let ev = self.evaluator();
        (0..grid.len()).into_par_iter().map(|k| ev.value(&grid.point(k))).collect()
    }
}

impl ProfileEval<'_> {
    /// φ̂ at a point already mapped to base coordinates z = Ln (A*)^{-i} ξ.
    fn base(&self, z: &DVector<f64>) -> f64 {
        let r = z.norm();
        if r <= self.p.lo || r >= self.p.hi {
            return 0.0;
        }
        let num = self.p.g(r);
        let den: f64 = self.steps.iter().map(|s| self.p.g((s * z).norm())).sum();
        num / den
    }

    pub fn value(&self, xi: &[f64]) -> f64 {
        let x = DVector::from_row_slice(xi);
        self.maps.iter().map(|m| self.base(&(m * &x))).sum()
    }

    /// φ̂ at η + ζ, mapping the two parts separately so a huge carrier keeps its precision.
    pub fn value_split(&self, eta: &[f64], zeta: &[f64]) -> f64 {
        let (e, z) = (DVector::from_row_slice(eta), DVector::from_row_slice(zeta));
        self.maps.iter().map(|m| self.base(&(m * &e + m * &z))).sum()
    }

    /// Evaluator for η + ζ with η fixed: the carrier part is mapped once.
    pub fn at_carrier(&self, eta: &[f64]) -> CarrierEval {
        let d = eta.len();
        let flat = |m: &DMatrix<f64>| (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| m[(r, c)]).collect::<Vec<f64>>();
        let e = DVector::from_row_slice(eta);
        CarrierEval {
            d,
            lo: self.p.lo,
            hi: self.p.hi,
            plateau: self.p.plateau,
            maps: self.maps.iter().map(|m| (flat(m), (m * &e).iter().copied().collect())).collect(),
            steps: self.steps.iter().map(flat).collect(),
        }
    }

    /// Whether η + ζ can lie in the support, from the triangle inequality on |·|_*.
    pub fn may_touch(&self, eta: &[f64], radius: f64) -> bool {
        let e = DVector::from_row_slice(eta);
        self.maps.iter().any(|m| {
            let c = (m * &e).norm();
            let r = radius * m.norm();
            c + r > self.p.lo && c - r < self.p.hi
        })
    }
}

/// Allocation-free φ̂(η + ·) for a fixed carrier η (dimension ≤ 4 uses the stack).
#[derive(Clone, Debug)]
pub struct CarrierEval {
    d: usize,
    lo: f64,
    hi: f64,
    plateau: f64,
    /// (row-major map, map applied to η)
    maps: Vec<(Vec<f64>, Vec<f64>)>,
    steps: Vec<Vec<f64>>,
}

const STACK_DIM: usize = 4;

impl CarrierEval {
    fn g(&self, t: f64) -> f64 {
        if t <= self.lo || t >= self.hi {
            return 0.0;
        }
        smooth_step((t - self.lo) / (1.0 - self.lo)) * smooth_step((self.hi - t) / (self.hi - self.plateau))
    }

    fn norm_of(&self, m: &[f64], z: &[f64]) -> f64 {
        let d = self.d;
        (0..d).map(|r| (0..d).map(|c| m[r * d + c] * z[c]).sum::<f64>()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn value(&self, zeta: &[f64]) -> f64 {
        if self.d > STACK_DIM {
            let mut z = vec![0.0; self.d];
            return self.maps.iter().map(|(m, me)| self.base_into(m, me, zeta, &mut z)).sum();
        }
        let mut z = [0.0; STACK_DIM];
        self.maps.iter().map(|(m, me)| self.base_into(m, me, zeta, &mut z[..self.d])).sum()
    }

    fn base_into(&self, m: &[f64], me: &[f64], zeta: &[f64], z: &mut [f64]) -> f64 {
        let d = self.d;
        for r in 0..d {
            z[r] = me[r] + (0..d).map(|c| m[r * d + c] * zeta[c]).sum::<f64>();
        }
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= self.lo || r >= self.hi {
            return 0.0;
        }
        let den: f64 = self.steps.iter().map(|s| self.g(self.norm_of(s, z))).sum();
        self.g(r) / den
    }
}

/// Partition-of-unity residual max |Σ_i φ̂((A*)^i ξ) − 1| over the given frequencies.
pub fn partition_residual(p: &FourierProfile, xis: &[Vec<f64>]) -> f64 {
    let ln_inv_theta = -p.dual.ellipsoid.theta().ln();
    // indices i with |(A*)^{-i}ξ| possibly in (lo, hi)
    let range = |xi: &[f64]| {
        let r = p.dual.ellipsoid.norm(xi);
        let c = (r.ln() / ln_inv_theta).round() as i64;
        let span = (r.ln().abs() / p.dual.expansion().ln().min(ln_inv_theta)).ceil() as i64 + 2 * p.window + 2;
        (c.min(0) - span, c.max(0) + span)
    };
    let ranges: Vec<(i64, i64)> = xis.iter().map(|x| range(x)).collect();
    let Some(lo) = ranges.iter().map(|r| r.0).min() else {
        return 0.0;
    };
    let hi = ranges.iter().map(|r| r.1).max().unwrap_or(lo);
    let dil: Vec<FourierProfile> = (lo..=hi).map(|i| p.dilate(i)).collect();
    let evs: Vec<ProfileEval> = dil.iter().map(|d| d.evaluator()).collect();
    xis.par_iter()
        .zip(&ranges)
        .map(|(xi, &(a, b))| {
            let s: f64 = (a..=b).map(|i| evs[(i - lo) as usize].value(xi)).sum();
            (s - 1.0).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Support sets of two profiles, ready for intersection tests.
pub struct CoverPair<'a> {
    q: &'a FourierProfile,
    p: &'a FourierProfile,
}

const LN_TOL: f64 = 1e-9;

impl<'a> CoverPair<'a> {
    pub fn new(q: &'a FourierProfile, p: &'a FourierProfile) -> Result<Self> {
        if q.dim() != p.dim() {
            return Err(Error::DimMismatch(q.dim(), p.dim()));
        }
        Ok(Self { q, p })
    }

    /// ln of (σ_min, σ_max) of M = Lq (A*)^{-i} (B*)^j Lp⁻¹.
    pub fn ln_sigma(&self, i: i64, j: i64) -> (f64, f64) {
        let (qa, pb) = (&self.q.dual, &self.p.dual);
        let m = qa.powers().power(-i).mul(&pb.powers().power(j));
        let m = m.lmul_plain(qa.ellipsoid.factor()).rmul_plain(pb.ellipsoid.factor_inv());
        let minv = pb.powers().power(-j).mul(&qa.powers().power(i));
        let minv = minv.lmul_plain(pb.ellipsoid.factor()).rmul_plain(qa.ellipsoid.factor_inv());
        (-norm_ln(&minv), norm_ln(&m))
    }

    /// (A*)^iQ ∩ (B*)^jP ≠ ∅, with a tolerance favouring contact.
    pub fn intersects(&self, i: i64, j: i64) -> bool {
        let (lmin, lmax) = self.ln_sigma(i, j);
        let (a, b) = (self.p.lo.ln(), self.p.hi.ln());
        let (c, d) = (self.q.lo.ln(), self.q.hi.ln());
        a + lmin < d + LN_TOL && b + lmax > c - LN_TOL
    }

    fn low_ok(&self, i: i64, j: i64) -> bool {
        let (_, lmax) = self.ln_sigma(i, j);
        self.p.hi.ln() + lmax > self.q.lo.ln() - LN_TOL
    }
    fn high_ok(&self, i: i64, j: i64) -> bool {
        let (lmin, _) = self.ln_sigma(i, j);
        self.p.lo.ln() + lmin < self.q.hi.ln() + LN_TOL
    }

    fn guess_j(&self, i: i64) -> i64 {
        (i as f64 * self.q.dual.ln_det() / self.p.dual.ln_det()).floor() as i64
    }

    /// J_i as an inclusive interval (σ's are increasing in j).
    pub fn j_interval(&self, i: i64) -> Option<(i64, i64)> {
        let g = self.guess_j(i);
        // first j with low_ok; low_ok is monotone false→true in j
        let first = boundary(g, |j| self.low_ok(i, j));
        // last j with high_ok; high_ok is monotone true→false
        let last = boundary(g, |j| !self.high_ok(i, j)) - 1;
        (first <= last).then_some((first, last))
    }

    /// I_j as an inclusive interval (σ's are decreasing in i).
    pub fn i_interval(&self, j: i64) -> Option<(i64, i64)> {
        let g = (j as f64 * self.p.dual.ln_det() / self.q.dual.ln_det()).floor() as i64;
        let first = boundary(g, |i| self.high_ok(i, j));
        let last = boundary(g, |i| !self.low_ok(i, j)) - 1;
        (first <= last).then_some((first, last))
    }
}

fn norm_ln(m: &ScaledMatrix) -> f64 {
    m.ln_norm()
}

/// Smallest integer k with pred(k), for a predicate monotone false→true; search starts at `g`.
fn boundary(g: i64, pred: impl Fn(i64) -> bool) -> i64 {
    let (mut lo, mut hi);
    if pred(g) {
        hi = g;
        let mut step = 1;
        lo = g - step;
        while pred(lo) {
            hi = lo;
            step *= 2;
            lo = g - step;
        }
    } else {
        lo = g;
        let mut step = 1;
        hi = g + step;
        while !pred(hi) {
            lo = hi;
            step *= 2;
            hi = g + step;
        }
    }
    // pred(lo) false, pred(hi) true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IndexSets {
    pub i_range: (i64, i64),
    pub j_range: (i64, i64),
    /// i → inclusive interval of j
    #[serde(rename = "J")]
    pub j_sets: BTreeMap<i64, (i64, i64)>,
    #[serde(rename = "I")]
    pub i_sets: BTreeMap<i64, (i64, i64)>,
}

impl IndexSets {
    pub fn max_j(&self) -> usize {
        self.j_sets.values().map(|(a, b)| (b - a + 1) as usize).max().unwrap_or(0)
    }
    pub fn max_i(&self) -> usize {
        self.i_sets.values().map(|(a, b)| (b - a + 1) as usize).max().unwrap_or(0)
    }
    pub fn j_of(&self, i: i64) -> Vec<i64> {
        self.j_sets.get(&i).map_or(vec![], |&(a, b)| (a..=b).collect())
    }
    pub fn i_of(&self, j: i64) -> Vec<i64> {
        self.i_sets.get(&j).map_or(vec![], |&(a, b)| (a..=b).collect())
    }
    /// j ∈ J(i) ⇔ i ∈ I(j) for i, j inside both ranges.
    pub fn consistent(&self) -> bool {
        for i in self.i_range.0..=self.i_range.1 {
            for j in self.j_range.0..=self.j_range.1 {
                let a = self.j_sets.get(&i).is_some_and(|&(x, y)| x <= j && j <= y);
                let b = self.i_sets.get(&j).is_some_and(|&(x, y)| x <= i && i <= y);
                if a != b {
                    return false;
                }
            }
        }
        true
    }
}

pub fn intersection_sets(q: &FourierProfile, p: &FourierProfile, i_range: (i64, i64), j_range: (i64, i64)) -> Result<IndexSets> {
    if i_range.0 > i_range.1 || j_range.0 > j_range.1 {
        return Err(Error::Param("empty index range".into()));
    }
    let cp = CoverPair::new(q, p)?;
    let j_sets: BTreeMap<_, _> = (i_range.0..=i_range.1)
        .into_par_iter()
        .filter_map(|i| cp.j_interval(i).map(|v| (i, v)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let i_sets: BTreeMap<_, _> = (j_range.0..=j_range.1)
        .into_par_iter()
        .filter_map(|j| cp.i_interval(j).map(|v| (j, v)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    Ok(IndexSets { i_range, j_range, j_sets, i_sets })
}

/// Smallest N with {m : (A*)^mQ ∩ Q ≠ ∅} ⊆ [−N, N]; dilation invariance checked at i ∈ {1, 5, −3}.
pub fn neighbor_bound(q: &FourierProfile) -> Result<i64> {
    let cp = CoverPair::new(q, q)?;
    let (a, b) = cp.j_interval(0).ok_or_else(|| Error::Profile("Q does not meet itself".into()))?;
    let n = (-a).max(b);
    for i in [1, 5, -3] {
        let (x, y) = cp.j_interval(i).ok_or_else(|| Error::Profile("empty self-intersection".into()))?;
        if (-(x - i)).max(y - i) != n {
            return Err(Error::Profile(format!("neighbour bound not dilation invariant at i = {i}")));
        }
    }
    Ok(n)
}
