//! Discrete homogeneous Triebel-Lizorkin quasi-norms of banded fields.
//!
//! Pieces f ∗ φ_i are Fourier multipliers on the stored band spectra, so every
//! index i whose dilated profile misses the spectrum gives an exactly zero piece
//! and the sum over i is finite without approximation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covers::{BumpShape, FourierProfile};
use crate::error::{Error, Result};
use crate::fft::unflatten;
use crate::field::{Band, Quadrature, SampledField, Shift};
use crate::linalg::{Dilation, ExpansiveMatrix};
use crate::quasinorm::StepQuasiNorm;

/// Weight below which Peetre offsets are dropped.
pub const PEETRE_EDGE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TlParams {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub i_range: Option<(i64, i64)>,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl TlParams {
    pub fn new(alpha: f64, p: f64, q: f64) -> Self {
        Self { alpha, p, q, i_range: None, beta: None }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) || !(self.q > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Param(format!("need p, q > 0 and finite alpha (got {}, {}, {})", self.p, self.q, self.alpha)));
        }
        if let Some((a, b)) = self.i_range {
            if a > b {
                return Err(Error::Param(format!("empty i_range [{a}, {b}]")));
            }
        }
        Ok(())
    }

    /// The smallest admissible Peetre exponent, max(1/p, 1/q).
    pub fn beta_floor(&self) -> f64 {
        (1.0 / self.p).max(1.0 / self.q)
    }

    fn beta_checked(&self) -> Result<f64> {
        let b = self.beta.unwrap_or(self.beta_floor() + 1.0);
        if !(b > self.beta_floor()) {
            return Err(Error::Param(format!("beta = {b} must exceed max(1/p, 1/q) = {}", self.beta_floor())));
        }
        Ok(b)
    }
}

/// The dilation A with an analyzing profile for A*.
#[derive(Clone, Debug)]
pub struct Analyzer {
    space: StepQuasiNorm,
    profile: FourierProfile,
}

impl Analyzer {
    pub fn new(a: &ExpansiveMatrix, shape: BumpShape) -> Result<Self> {
        Self::with_profile(a, FourierProfile::new(a, shape)?)
    }

    pub fn with_profile(a: &ExpansiveMatrix, profile: FourierProfile) -> Result<Self> {
        if profile.dual().matrix != a.transpose() {
            return Err(Error::Profile("profile was not built for this matrix".into()));
        }
        Ok(Self { space: StepQuasiNorm::from_matrix(a.clone())?, profile })
    }

    pub fn dilation(&self) -> &Dilation {
        self.space.dilation()
    }
    pub fn quasi_norm(&self) -> &StepQuasiNorm {
        &self.space
    }
    pub fn profile(&self) -> &FourierProfile {
        &self.profile
    }
    pub fn dim(&self) -> usize {
        self.space.dim()
    }
    pub fn ln_det(&self) -> f64 {
        self.dilation().ln_det()
    }

    /// Indices i for which φ̂_i can meet frequencies with |ξ| in [r_lo, r_hi].
    pub fn index_bracket(&self, r_lo: f64, r_hi: f64) -> Result<(i64, i64)> {
        if !(r_lo > 0.0) {
            return Err(Error::Param("spectrum touches the origin; pass an explicit i_range".into()));
        }
        let dual = self.profile.dual();
        let f = dual.ellipsoid.factor();
        let sv = f.clone().svd(false, false).singular_values;
        let (smin, smax) = (sv.min(), sv.max());
        let (lo, hi) = self.profile.support();
        let ln_r = dual.expansion().ln();
        let ln_t = -dual.ellipsoid.theta().ln();
        let (t_lo, t_hi) = ((smin * r_lo).ln(), (smax * r_hi).ln());
        let a = (t_lo - hi.ln()) / ln_r;
        let b = (t_lo - hi.ln()) / ln_t;
        let c = (t_hi - lo.ln()) / ln_t;
        let e = (t_hi - lo.ln()) / ln_r;
        Ok((a.min(b).floor() as i64 - 1, c.max(e).ceil() as i64 + 1))
    }
}

/// Smallest and largest |η + ζ| over the nonzero spectrum of a band.
fn band_extent(f: &SampledField, b: &Band) -> Option<(f64, f64)> {
    let g = f.grid;
    let (lo, hi) = b
        .spectrum
        .par_iter()
        .enumerate()
        .filter(|(_, v)| v.norm_sqr() > 0.0)
        .map(|(k, _)| {
            let r = g.point(k).iter().zip(&b.carrier).map(|(z, e)| (z + e) * (z + e)).sum::<f64>().sqrt();
            (r, r)
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    lo.is_finite().then_some((lo, hi))
}

fn band_radius(f: &SampledField, b: &Band) -> f64 {
    let g = f.grid;
    b.spectrum
        .par_iter()
        .enumerate()
        .filter(|(_, v)| v.norm_sqr() > 0.0)
        .map(|(k, _)| g.point(k).iter().map(|z| z * z).sum::<f64>().sqrt())
        .reduce(|| 0.0, f64::max)
}

fn multiply_band(f: &SampledField, b: &Band, radius: f64, prof: &FourierProfile) -> Option<Band> {
    let ev = prof.evaluator();
    if !ev.may_touch(&b.carrier, radius) {
        return None;
    }
    let ce = ev.at_carrier(&b.carrier);
    let one = SampledField { grid: f.grid, bands: vec![b.clone()], certificate: None };
    one.multiply(|_, z| ce.value(z)).bands.pop()
}

/// f ∗ φ_i for the profile `prof` (which may be a window sum Φ).
pub fn convolve_dilate(f: &SampledField, prof: &FourierProfile, i: i64) -> SampledField {
    let p = prof.dilate(i);
    let bands = f.bands.iter().filter_map(|b| multiply_band(f, b, band_radius(f, b), &p)).collect();
    SampledField { grid: f.grid, bands, certificate: None }
}

/// The nonzero pieces f ∗ φ_i, keyed by i.
#[derive(Clone, Debug)]
pub struct Pieces {
    pub items: BTreeMap<i64, SampledField>,
    /// shifts chosen for the whole field
    pub shifts: Vec<Shift>,
}

impl Pieces {
    pub fn range(&self) -> Option<(i64, i64)> {
        Some((*self.items.keys().next()?, *self.items.keys().next_back()?))
    }
}

pub fn pieces(f: &SampledField, an: &Analyzer, i_range: Option<(i64, i64)>, quad: &Quadrature) -> Result<Pieces> {
    if f.dim() != an.dim() {
        return Err(Error::DimMismatch(f.dim(), an.dim()));
    }
    let mut items: BTreeMap<i64, SampledField> = BTreeMap::new();
    for b in &f.bands {
        let Some((lo, hi)) = band_extent(f, b) else { continue };
        let (i0, i1) = an.index_bracket(lo, hi).or_else(|e| i_range.ok_or(e))?;
        let (i0, i1) = match i_range {
            Some((a, c)) if lo == 0.0 => (a, c),
            _ => (i0, i1),
        };
        let radius = band_radius(f, b);
        let found: Vec<(i64, Band)> = (i0..=i1)
            .into_par_iter()
            .filter_map(|i| multiply_band(f, b, radius, &an.profile.dilate(i)).map(|nb| (i, nb)))
            .collect();
        for (i, nb) in found {
            if let Some((a, c)) = i_range {
                if i < a || i > c {
                    return Err(Error::Param(format!("i_range [{a}, {c}] truncates a nonzero piece at i = {i}")));
                }
            }
            items.entry(i).or_insert_with(|| SampledField::zero(f.grid)).add_band(nb);
        }
    }
    Ok(Pieces { items, shifts: quad.shifts_for(f) })
}

/// Moduli of every piece on one shifted lattice, with ln |det A|^{αi}.
fn moduli(ps: &Pieces, s: &Shift, ln_w: impl Fn(i64) -> f64) -> Vec<(i64, f64, Vec<f64>)> {
    ps.items.iter().map(|(&i, g)| (i, ln_w(i), g.modulus(s))).collect()
}

/// Log-normalised weights: (C, [(i, e^{c_i − C}/M_i)]) with c_i = ln w_i + ln max a_i.
fn normalise(arrs: &[(i64, f64, Vec<f64>)]) -> Option<(f64, Vec<f64>)> {
    let cs: Vec<(f64, f64)> = arrs
        .iter()
        .map(|(_, lw, a)| {
            let m = a.iter().fold(0.0f64, |x, &y| x.max(y));
            (lw + m.ln(), m)
        })
        .collect();
    let c = cs.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    if !c.is_finite() {
        return None;
    }
    Some((c, cs.iter().map(|&(ci, m)| if m > 0.0 { (ci - c).exp() / m } else { 0.0 }).collect()))
}

/// ℓ^q over pieces at each point, scaled by e^{−C}.
fn lq_pointwise(arrs: &[(i64, f64, Vec<f64>)], scale: &[f64], q: f64) -> Vec<f64> {
    let len = arrs[0].2.len();
    (0..len)
        .into_par_iter()
        .map(|x| {
            if q.is_infinite() {
                arrs.iter().zip(scale).map(|(a, s)| a.2[x] * s).fold(0.0, f64::max)
            } else {
                arrs.iter().zip(scale).map(|(a, s)| (a.2[x] * s).powf(q)).sum::<f64>().powf(1.0 / q)
            }
        })
        .collect()
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return f64::NEG_INFINITY;
    }
    m + (v.iter().map(|x| (x - m).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// ‖(Σ_i (w_i b_i)^q)^{1/q}‖_{L^p} where b_i are the per-shift piece arrays after `map`.
fn lp_lq(f: &SampledField, ps: &Pieces, an: &Analyzer, prm: &TlParams, map: impl Fn(i64, Vec<f64>) -> Vec<f64>) -> f64 {
    let ln_det = an.ln_det();
    let cell_ln = f.dim() as f64 * f.cell().ln();
    let logs: Vec<f64> = ps
        .shifts
        .iter()
        .map(|s| {
            let arrs: Vec<_> = moduli(ps, s, |i| prm.alpha * i as f64 * ln_det).into_iter().map(|(i, w, a)| (i, w, map(i, a))).collect();
            if arrs.is_empty() {
                return f64::NEG_INFINITY;
            }
            let Some((c, sc)) = normalise(&arrs) else { return f64::NEG_INFINITY };
            let g = lq_pointwise(&arrs, &sc, prm.q);
            let sum = crate::sampling::par_sum(g.len(), |k| g[k].powf(prm.p));
            prm.p * c + sum.ln() + cell_ln
        })
        .collect();
    let l = log_mean_exp(&logs);
    if l.is_finite() {
        (l / prm.p).exp()
    } else {
        0.0
    }
}

/// ‖f‖ for p < ∞: L^p of the ℓ^q aggregation of |det A|^{αi}|f ∗ φ_i|.
pub fn tl_norm(f: &SampledField, an: &Analyzer, prm: &TlParams, quad: &Quadrature) -> Result<f64> {
    prm.validate()?;
    if prm.p.is_infinite() {
        return Err(Error::Param("tl_norm needs p < ∞; use tl_norm_pinf".into()));
    }
    let ps = pieces(f, an, prm.i_range, quad)?;
    Ok(lp_lq(f, &ps, an, prm, |_, a| a))
}

/// Same as [`tl_norm`] with every piece replaced by its Peetre maximal function.
pub fn tl_norm_maximal(f: &SampledField, an: &Analyzer, prm: &TlParams, quad: &Quadrature) -> Result<f64> {
    prm.validate()?;
    if prm.p.is_infinite() {
        return Err(Error::Param("maximal norm implemented for p < ∞".into()));
    }
    let beta = prm.beta_checked()?;
    let ps = pieces(f, an, prm.i_range, quad)?;
    let win: BTreeMap<i64, PeetreWindow> = ps.items.keys().map(|&i| Ok((i, PeetreWindow::new(an, f, i, beta)?))).collect::<Result<_>>()?;
    Ok(lp_lq(f, &ps, an, prm, |i, a| win[&i].apply(&a, f.n(), f.dim())))
}

/// Weighted offsets for φ**_{i,β}: z on the grid with (1 + ρ_A(A^i z))^{−β} ≥ PEETRE_EDGE.
#[derive(Clone, Debug)]
pub struct PeetreWindow {
    /// (grid offset, weight), sorted by decreasing weight
    pub offsets: Vec<(Vec<i64>, f64)>,
    pub beta: f64,
}

impl PeetreWindow {
    pub fn new(an: &Analyzer, f: &SampledField, i: i64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Param(format!("beta = {beta} must be positive")));
        }
        let (d, n, h) = (f.dim(), f.n() as i64, f.cell());
        let ln_det = an.ln_det();
        let rw = PEETRE_EDGE.powf(-1.0 / beta) - 1.0;
        // ρ_A(A^i z) ≤ rw ⇔ idx(z) ≤ kz
        let kz = (rw.ln() / ln_det).floor() as i64 - i;
        let dil = an.dilation();
        let t = dil.powers().power(kz + 1).rmul_plain(dil.ellipsoid.factor_inv()).to_plain();
        let ext: Vec<i64> = (0..d).map(|a| ((t.row(a).norm() / h).ceil() as i64).min(n)).collect();
        let total: i64 = ext.iter().map(|e| 2 * e + 1).product();
        let qn = an.quasi_norm();
        let mut offsets: Vec<(Vec<i64>, f64)> = (0..total)
            .into_par_iter()
            .filter_map(|mut r| {
                let mut k = vec![0i64; d];
                for a in (0..d).rev() {
                    let w = 2 * ext[a] + 1;
                    k[a] = r % w - ext[a];
                    r /= w;
                }
                if k.iter().all(|&v| v == 0) {
                    return Some((k, 1.0));
                }
                let z: Vec<f64> = k.iter().map(|&v| v as f64 * h).collect();
                let idx = qn.scale_index(&z).ok()?;
                let w = (1.0 + ((i + idx) as f64 * ln_det).exp()).powf(-beta);
                (w >= PEETRE_EDGE).then_some((k, w))
            })
            .collect();
        offsets.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { offsets, beta })
    }

    /// φ** on the grid from |f ∗ φ_i|, zero extension outside the box.
    pub fn apply(&self, a: &[f64], n: usize, d: usize) -> Vec<f64> {
        let m = a.iter().fold(0.0f64, |x, &y| x.max(y));
        let mut out = a.to_vec();
        if m == 0.0 || self.offsets.len() <= 1 {
            return out;
        }
        let ni = n as i64;
        // gather form: out[x] = max_z w(z) a(x + z)
        out.par_iter_mut().enumerate().for_each(|(x, o)| {
            let mut ix = [0usize; 3];
            unflatten(x, n, d, &mut ix[..d]);
            for (k, w) in &self.offsets {
                if *w * m <= *o {
                    break;
                }
                let mut flat = 0usize;
                let mut inside = true;
                for ax in 0..d {
                    let v = ix[ax] as i64 + k[ax];
                    if v < 0 || v >= ni {
                        inside = false;
                        break;
                    }
                    flat = flat * n + v as usize;
                }
                if inside {
                    let c = w * a[flat];
                    if c > *o {
                        *o = c;
                    }
                }
            }
        });
        out
    }
}

/// φ**_{i,β} f on the unshifted lattice.
pub fn peetre_maximal(f: &SampledField, an: &Analyzer, i: i64, beta: f64) -> Result<Vec<f64>> {
    let piece = convolve_dilate(f, an.profile(), i);
    let a = piece.modulus(&vec![0; f.dim()]);
    Ok(PeetreWindow::new(an, f, i, beta)?.apply(&a, f.n(), f.dim()))
}

/// sup_i |det A|^{αi} ‖f ∗ φ_i‖_∞.
pub fn tl_norm_pinf_qinf(f: &SampledField, an: &Analyzer, prm: &TlParams, quad: &Quadrature) -> Result<f64> {
    prm.validate()?;
    let ps = pieces(f, an, prm.i_range, quad)?;
    let ln_det = an.ln_det();
    let mut best = f64::NEG_INFINITY;
    for s in &ps.shifts {
        for (_, lw, a) in moduli(&ps, s, |i| prm.alpha * i as f64 * ln_det) {
            let m = a.iter().fold(0.0f64, |x, &y| x.max(y));
            best = best.max(lw + m.ln());
        }
    }
    Ok(if best.is_finite() { best.exp() } else { 0.0 })
}

/// Per piece: mean over shifts of (a_i/M_i)^q with the log scale ln w_i + ln M_i.
fn shift_averaged(ps: &Pieces, an: &Analyzer, prm: &TlParams, q: f64) -> Vec<(i64, f64, Vec<f64>)> {
    let ln_det = an.ln_det();
    let mut acc: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
    let ns = ps.shifts.len() as f64;
    for s in &ps.shifts {
        for (i, _, a) in moduli(ps, s, |_| 0.0) {
            let m = a.iter().fold(0.0f64, |x, &y| x.max(y));
            if m == 0.0 {
                continue;
            }
            let e = acc.entry(i).or_insert_with(|| (m, vec![0.0; a.len()]));
            if m > e.0 {
                let r = (e.0 / m).powf(q);
                e.1.par_iter_mut().for_each(|v| *v *= r);
                e.0 = m;
            }
            let mm = e.0;
            e.1.par_iter_mut().zip(&a).for_each(|(v, x)| *v += (x / mm).powf(q) / ns);
        }
    }
    acc.into_iter().map(|(i, (m, v))| (i, prm.alpha * i as f64 * ln_det + m.ln(), v)).collect()
}

/// sup over ℓ, w of averages over A^ℓΩ + w of Σ_{i ≥ −ℓ}(|det A|^{αi}|f ∗ φ_i|)^q, to the power 1/q.
pub fn tl_norm_pinf(f: &SampledField, an: &Analyzer, prm: &TlParams, quad: &Quadrature, density: f64) -> Result<f64> {
    prm.validate()?;
    if prm.q.is_infinite() {
        return Err(Error::Param("tl_norm_pinf needs q < ∞; use tl_norm_pinf_qinf".into()));
    }
    if !(density > 0.0) {
        return Err(Error::Param(format!("lattice density {density} must be positive")));
    }
    let ps = pieces(f, an, prm.i_range, quad)?;
    let arrs = shift_averaged(&ps, an, prm, prm.q);
    if arrs.is_empty() {
        return Ok(0.0);
    }
    let c = arrs.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
    let (i_min, i_max) = (arrs[0].0, arrs[arrs.len() - 1].0);
    let avg = SupAverage::new(f, an);
    let len = f.len();
    let mut best = 0.0f64;
    for ell in -i_max..=(-i_min + 3) {
        // G_ℓ = Σ_{i ≥ −ℓ} (w_i a_i)^q / e^{qC}
        let mut g = vec![0.0; len];
        for (i, lw, a) in &arrs {
            if *i >= -ell {
                let s = (prm.q * (lw - c)).exp();
                g.par_iter_mut().zip(a).for_each(|(x, y)| *x += s * y);
            }
        }
        let Some(v) = avg.sup(&g, ell, density) else { break };
        best = best.max(v);
    }
    Ok(if best > 0.0 { (c + best.ln() / prm.q).exp() } else { 0.0 })
}

/// The average-form p = q = ∞ quantity: sup over ℓ, w and i ≥ −ℓ of ellipsoid averages of |det A|^{αi}|f ∗ φ_i|.
pub fn tl_norm_pinf_qinf_average(f: &SampledField, an: &Analyzer, prm: &TlParams, quad: &Quadrature, density: f64) -> Result<f64> {
    prm.validate()?;
    let ps = pieces(f, an, prm.i_range, quad)?;
    let arrs = shift_averaged(&ps, an, prm, 1.0);
    let avg = SupAverage::new(f, an);
    let mut best = f64::NEG_INFINITY;
    for (i, lw, a) in &arrs {
        for ell in -i..=(-i + 3) {
            let Some(v) = avg.sup(a, ell, density) else { break };
            if v > 0.0 {
                best = best.max(lw + v.ln());
            }
        }
    }
    Ok(if best.is_finite() { best.exp() } else { 0.0 })
}

/// Lattice density used for the p = ∞ suprema unless stated otherwise.
pub const DEFAULT_DENSITY: f64 = 1.0;

/// The quasi-norm for any (p, q): L^p-form for p < ∞, ellipsoid averages for p = ∞ > q,
/// sup form for p = q = ∞.
pub fn norm(f: &SampledField, an: &Analyzer, prm: &TlParams, quad: &Quadrature) -> Result<f64> {
    if prm.p.is_finite() {
        tl_norm(f, an, prm, quad)
    } else if prm.q.is_finite() {
        tl_norm_pinf(f, an, prm, quad, DEFAULT_DENSITY)
    } else {
        tl_norm_pinf_qinf(f, an, prm, quad)
    }
}

/// Suprema over translates of averages over A^ℓΩ on one grid.
struct SupAverage<'a> {
    dil: &'a Dilation,
    n: usize,
    d: usize,
    h: f64,
    x: f64,
}

impl<'a> SupAverage<'a> {
    fn new(f: &SampledField, an: &'a Analyzer) -> Self {
        Self { dil: an.dilation(), n: f.n(), d: f.dim(), h: f.cell(), x: f.half_width() }
    }

    /// Multilinear interpolation with zero extension, at fractional grid coordinates.
    fn interp(&self, g: &[f64], u: &[f64]) -> f64 {
        let (n, d) = (self.n, self.d);
        let mut base = [0i64; 3];
        let mut fr = [0.0; 3];
        for a in 0..d {
            let fl = u[a].floor();
            base[a] = fl as i64;
            fr[a] = u[a] - fl;
        }
        let mut s = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            let mut ok = true;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                let v = base[a] + bit as i64;
                if v < 0 || v >= n as i64 {
                    ok = false;
                    break;
                }
                w *= if bit == 1 { fr[a] } else { 1.0 - fr[a] };
                flat = flat * n + v as usize;
            }
            if ok && w > 0.0 {
                s += w * g[flat];
            }
        }
        s
    }

    /// sup_w mean over A^ℓΩ + w of g; None once the ellipsoid outgrows the box.
    fn sup(&self, g: &[f64], ell: i64, density: f64) -> Option<f64> {
        let (d, n, h) = (self.d, self.n, self.h);
        let gmax = g.iter().fold(0.0f64, |a, &b| a.max(b));
        let t = self.dil.powers().power(ell).rmul_plain(self.dil.ellipsoid.factor_inv()).to_plain();
        let sv = t.clone().svd(false, false).singular_values;
        let (smin, smax) = (sv.min(), sv.max());
        let half: Vec<f64> = (0..d).map(|a| t.row(a).norm()).collect();
        if half.iter().any(|&e| e > 2.0 * self.x) {
            return None;
        }
        if gmax == 0.0 {
            return Some(0.0);
        }
        if smax < 0.5 * h {
            return Some(gmax);
        }
        // stencil: cell-centred points of the unit ball, mapped by T, in grid units
        let cap = match d {
            1 => 4096,
            2 => 96,
            _ => 24,
        };
        let m = ((4.0 * smax / h).ceil() as usize).clamp(8, cap);
        let mut stencil: Vec<Vec<f64>> = vec![];
        let total = m.pow(d as u32);
        let mut idx = [0usize; 3];
        for r in 0..total {
            unflatten(r, m, d, &mut idx[..d]);
            let p: Vec<f64> = (0..d).map(|a| (idx[a] as f64 + 0.5) * 2.0 / m as f64 - 1.0).collect();
            if p.iter().map(|v| v * v).sum::<f64>() < 1.0 {
                let o = &t * DVector::from_vec(p);
                stencil.push(o.iter().map(|v| v / h).collect());
            }
        }
        // region: box of significant values widened by the ellipsoid extent (grid units)
        let mut lo = vec![n as f64; d];
        let mut hi = vec![0.0f64; d];
        for (k, v) in g.iter().enumerate() {
            if *v > 1e-9 * gmax {
                unflatten(k, n, d, &mut idx[..d]);
                for a in 0..d {
                    lo[a] = lo[a].min(idx[a] as f64);
                    hi[a] = hi[a].max(idx[a] as f64);
                }
            }
        }
        for a in 0..d {
            lo[a] -= half[a] / h + 1.0;
            hi[a] += half[a] / h + 1.0;
        }
        // w lattice: 4·density points per semi-axis, or half cells when the minor axis is below a cell
        let basis: DMatrix<f64> = if smin >= h { &t / (4.0 * density * h) } else { DMatrix::identity(d, d) / (2.0 * density) };
        let binv = basis.clone().try_inverse()?;
        let mut klo = vec![i64::MAX; d];
        let mut khi = vec![i64::MIN; d];
        for corner in 0..(1usize << d) {
            let c: Vec<f64> = (0..d).map(|a| if (corner >> a) & 1 == 1 { hi[a] } else { lo[a] }).collect();
            let kc = &binv * DVector::from_vec(c);
            for a in 0..d {
                klo[a] = klo[a].min(kc[a].floor() as i64);
                khi[a] = khi[a].max(kc[a].ceil() as i64);
            }
        }
        let span: Vec<i64> = (0..d).map(|a| khi[a] - klo[a] + 1).collect();
        let count: i64 = span.iter().product();
        let inv_len = 1.0 / stencil.len() as f64;
        let best = (0..count)
            .into_par_iter()
            .filter_map(|mut r| {
                let mut kv = DVector::zeros(d);
                for a in (0..d).rev() {
                    kv[a] = (r % span[a] + klo[a]) as f64;
                    r /= span[a];
                }
                let w = &basis * kv;
                if (0..d).any(|a| w[a] < lo[a] || w[a] > hi[a]) {
                    return None;
                }
                let mut u = [0.0; 3];
                let mut s = 0.0;
                for o in &stencil {
                    for a in 0..d {
                        u[a] = w[a] + o[a];
                    }
                    s += self.interp(g, &u[..d]);
                }
                Some(s * inv_len)
            })
            .reduce(|| 0.0, f64::max);
        Some(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covers::FrequencyGrid;
    use num_complex::Complex64;

    fn smooth_ball(f: &mut SampledField, eta: &[f64], delta: f64, c: f64) {
        f.add_band_fn(eta, |z| {
            let r2: f64 = z.iter().map(|v| v * v).sum::<f64>() / (delta * delta);
            if r2 >= 1.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(c * (-1.0 / (1.0 - r2)).exp(), 0.0)
            }
        });
    }

    fn setup() -> (Analyzer, SampledField) {
        let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
        let an = Analyzer::new(&a, BumpShape::default()).unwrap();
        let grid = FrequencyGrid::new(2, 2.0, 128).unwrap();
        let mut f = SampledField::zero(grid);
        smooth_ball(&mut f, &[6.0, 1.0], 0.5, 1.0);
        (an, f)
    }

    #[test]
    fn pieces_are_finite_and_reproduce_f() {
        let (an, f) = setup();
        let ps = pieces(&f, &an, None, &Quadrature::default()).unwrap();
        let (a, b) = ps.range().unwrap();
        assert!(b - a <= 3, "{a} {b}");
        // Σ_i f ∗ φ_i = f
        let mut sum = SampledField::zero(f.grid);
        for g in ps.items.values() {
            sum = sum.plus(g).unwrap();
        }
        let (x, y) = (f.samples(&vec![0, 0]), sum.samples(&vec![0, 0]));
        let m = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(x.iter().zip(&y).all(|(p, q)| (p - q).norm() < 1e-10 * m));
    }

    #[test]
    fn truncating_range_is_an_error() {
        let (an, f) = setup();
        let ps = pieces(&f, &an, None, &Quadrature::default()).unwrap();
        let (a, _) = ps.range().unwrap();
        assert!(pieces(&f, &an, Some((a + 1, a + 10)), &Quadrature::default()).is_err());
    }

    #[test]
    fn homogeneity_and_zero() {
        let (an, f) = setup();
        let q = Quadrature::default();
        let prm = TlParams::new(0.5, 1.5, 2.0);
        let n1 = tl_norm(&f, &an, &prm, &q).unwrap();
        let n3 = tl_norm(&f.scaled(Complex64::new(0.0, -3.0)), &an, &prm, &q).unwrap();
        assert!((n3 / n1 - 3.0).abs() < 1e-12);
        assert_eq!(tl_norm(&SampledField::zero(f.grid), &an, &prm, &q).unwrap(), 0.0);
        assert_eq!(tl_norm_pinf(&SampledField::zero(f.grid), &an, &prm, &q, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn peetre_dominates_and_is_monotone() {
        let (an, f) = setup();
        let i = *pieces(&f, &an, None, &Quadrature::default()).unwrap().items.keys().next().unwrap();
        let a = convolve_dilate(&f, an.profile(), i).modulus(&vec![0, 0]);
        let m1 = peetre_maximal(&f, &an, i, 1.0).unwrap();
        let m2 = peetre_maximal(&f, &an, i, 2.5).unwrap();
        for k in 0..a.len() {
            assert!(m2[k] >= a[k] && m1[k] >= m2[k]);
        }
    }
}
