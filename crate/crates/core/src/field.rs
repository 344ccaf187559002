//! Band-limited fields on a periodic box, stored as demodulated bands.
//!
//! A band is e^{2πiη·x} E(x) with carrier η on the lattice ℤ^d/(2X) and an
//! envelope E given by samples of its continuous Fourier transform at
//! ζ_k = (k − n/2)/(2X). Carrier phases at sample points are computed in exact
//! integer arithmetic, so carriers many orders of magnitude above the envelope
//! bandwidth cost nothing.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covers::FrequencyGrid;
use crate::error::{Error, Result};
use crate::fft::{fft_nd, parity, unflatten};
use crate::sampling;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    /// η·2X per axis (exact)
    pub lattice: Vec<i128>,
    pub carrier: Vec<f64>,
    /// Ê(ζ_k), row-major
    pub spectrum: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BandCertificate {
    Ball { center: Vec<f64>, radius: f64 },
    Balls(Vec<(Vec<f64>, f64)>),
}

impl BandCertificate {
    pub fn contains(&self, xi: &[f64]) -> bool {
        let inside = |c: &[f64], r: f64| xi.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= r;
        match self {
            BandCertificate::Ball { center, radius } => inside(center, *radius),
            BandCertificate::Balls(v) => v.iter().any(|(c, r)| inside(c, *r)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    pub grid: FrequencyGrid,
    pub bands: Vec<Band>,
    pub certificate: Option<BandCertificate>,
}

/// Shift of the sampling lattice, per axis in units of 2X/2^128.
pub type Shift = Vec<u128>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// random lattice shifts used when bands with different carriers interfere
    pub shifts: usize,
    pub seed: u64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { shifts: 16, seed: 0x5eed }
    }
}

impl Quadrature {
    /// Shifts used for `f`: only the unshifted lattice when at most one carrier is present.
    pub fn shifts_for(&self, f: &SampledField) -> Vec<Shift> {
        let d = f.grid.dim;
        if f.bands.len() <= 1 || self.shifts <= 1 {
            return vec![vec![0; d]];
        }
        let bits = f.grid.n_per_axis.trailing_zeros();
        let mut r = sampling::rng(self.seed, 0x51f7);
        (0..self.shifts).map(|_| (0..d).map(|_| r.random::<u128>() >> bits).collect()).collect()
    }
}

fn shift_offset(grid: &FrequencyGrid, s: &Shift) -> Vec<f64> {
    let x2 = 2.0 * grid.spatial_half_width();
    s.iter().map(|&u| (u as f64) / 2f64.powi(128) * x2).collect()
}

impl SampledField {
    pub fn zero(grid: FrequencyGrid) -> Self {
        Self { grid, bands: vec![], certificate: None }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }
    pub fn n(&self) -> usize {
        self.grid.n_per_axis
    }
    pub fn len(&self) -> usize {
        self.grid.len()
    }
    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
    /// Spatial half width X.
    pub fn half_width(&self) -> f64 {
        self.grid.spatial_half_width()
    }
    /// Spatial cell size h = 2X/n.
    pub fn cell(&self) -> f64 {
        1.0 / (2.0 * self.grid.half_width)
    }

    /// Nearest lattice point ℤ^d/(2X) to η.
    pub fn lattice_carrier(&self, eta: &[f64]) -> (Vec<i128>, Vec<f64>) {
        let x2 = 2.0 * self.half_width();
        let lat: Vec<i128> = eta.iter().map(|e| (e * x2).round() as i128).collect();
        let car = lat.iter().map(|&l| l as f64 / x2).collect();
        (lat, car)
    }

    /// Envelope frequency ζ_k.
    pub fn zeta(&self, k: usize) -> Vec<f64> {
        self.grid.point(k)
    }

    /// Add ĝ(ζ) to the band with carrier η (rounded to the lattice).
    pub fn add_band_fn(&mut self, eta: &[f64], f: impl Fn(&[f64]) -> Complex64 + Sync) {
        let (lattice, carrier) = self.lattice_carrier(eta);
        let g = self.grid;
        let spec: Vec<Complex64> = (0..g.len()).into_par_iter().map(|k| f(&g.point(k))).collect();
        self.add_band(Band { lattice, carrier, spectrum: spec });
    }

    pub fn add_band(&mut self, b: Band) {
        if let Some(e) = self.bands.iter_mut().find(|e| e.lattice == b.lattice) {
            for (x, y) in e.spectrum.iter_mut().zip(&b.spectrum) {
                *x += y;
            }
        } else {
            self.bands.push(b);
        }
    }

    pub fn plus(&self, o: &SampledField) -> Result<SampledField> {
        if self.grid != o.grid {
            return Err(Error::Grid("grids differ".into()));
        }
        let mut out = self.clone();
        for b in &o.bands {
            out.add_band(b.clone());
        }
        out.certificate = None;
        Ok(out)
    }

    pub fn scaled(&self, c: Complex64) -> SampledField {
        let mut out = self.clone();
        for b in &mut out.bands {
            for v in &mut b.spectrum {
                *v *= c;
            }
        }
        out
    }

    /// Field from complex spatial samples at x_m = −X + m h (single band, carrier 0).
    pub fn from_samples(grid: FrequencyGrid, samples: &[Complex64]) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::Grid(format!("{} samples for a grid of {}", samples.len(), grid.len())));
        }
        let (n, d) = (grid.n_per_axis, grid.dim);
        let mut buf: Vec<Complex64> = samples.iter().enumerate().map(|(m, v)| v * parity(m, n, d)).collect();
        fft_nd(&mut buf, n, d, false);
        let hd = (1.0 / (2.0 * grid.half_width)).powi(d as i32);
        for (k, v) in buf.iter_mut().enumerate() {
            *v *= hd * parity(k, n, d);
        }
        Ok(Self { grid, bands: vec![Band { lattice: vec![0; d], carrier: vec![0.0; d], spectrum: buf }], certificate: None })
    }

    /// Envelope samples E_b(x_m + s).
    pub fn envelope(&self, b: &Band, shift: &Shift) -> Vec<Complex64> {
        let (n, d) = (self.n(), self.dim());
        let off = shift_offset(&self.grid, shift);
        let nonzero = off.iter().any(|v| *v != 0.0);
        let g = self.grid;
        let mut buf: Vec<Complex64> = b
            .spectrum
            .par_iter()
            .enumerate()
            .map(|(k, v)| {
                let mut w = v * parity(k, n, d);
                if nonzero {
                    let z = g.point(k);
                    let ph: f64 = z.iter().zip(&off).map(|(a, b)| a * b).sum();
                    w *= Complex64::from_polar(1.0, TAU * ph);
                }
                w
            })
            .collect();
        fft_nd(&mut buf, n, d, true);
        let scale = (2.0 * self.half_width()).powi(-(d as i32));
        buf.par_iter_mut().enumerate().for_each(|(m, v)| *v *= scale * parity(m, n, d));
        buf
    }

    /// Carrier phase e^{2πiη·x} at x_m + s, exact in the lattice.
    fn phase(lat: &[i128], n: usize, shift: &Shift, idx: &[usize]) -> Complex64 {
        let bits = 128 - n.trailing_zeros();
        let mut turns = 0.0;
        for a in 0..lat.len() {
            let u = ((idx[a] as u128) << bits).wrapping_add(shift[a]);
            let t = (lat[a] as u128).wrapping_mul(u);
            turns += (t >> 64) as f64 / 2f64.powi(64);
            if lat[a] % 2 != 0 {
                turns += 0.5;
            }
        }
        Complex64::from_polar(1.0, TAU * turns)
    }

    /// Complex samples f(x_m + s).
    pub fn samples(&self, shift: &Shift) -> Vec<Complex64> {
        let (n, d) = (self.n(), self.dim());
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        for b in &self.bands {
            let e = self.envelope(b, shift);
            let trivial = b.lattice.iter().all(|&l| l == 0);
            out.par_iter_mut().enumerate().for_each(|(m, v)| {
                if trivial && shift.iter().all(|&s| s == 0) {
                    *v += e[m];
                } else {
                    let mut idx = [0usize; 3];
                    unflatten(m, n, d, &mut idx[..d]);
                    *v += e[m] * Self::phase(&b.lattice, n, shift, &idx[..d]);
                }
            });
        }
        out
    }

    /// |f(x_m + s)|.
    pub fn modulus(&self, shift: &Shift) -> Vec<f64> {
        match self.bands.len() {
            0 => vec![0.0; self.len()],
            1 => self.envelope(&self.bands[0], shift).iter().map(|v| v.norm()).collect(),
            _ => self.samples(shift).iter().map(|v| v.norm()).collect(),
        }
    }

    /// Multiply every band by m(η + ζ): a Fourier multiplier.
    pub fn multiply(&self, m: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> SampledField {
        let g = self.grid;
        let bands = self
            .bands
            .iter()
            .filter_map(|b| {
                let spec: Vec<Complex64> = b
                    .spectrum
                    .par_iter()
                    .enumerate()
                    .map(|(k, v)| if *v == Complex64::new(0.0, 0.0) { *v } else { v * m(&b.carrier, &g.point(k)) })
                    .collect();
                spec.iter()
                    .any(|v| *v != Complex64::new(0.0, 0.0))
                    .then(|| Band { lattice: b.lattice.clone(), carrier: b.carrier.clone(), spectrum: spec })
            })
            .collect();
        SampledField { grid: g, bands, certificate: None }
    }

    /// Fraction of spectral ℓ² mass at frequencies outside the certificate.
    pub fn mass_outside(&self, cert: &BandCertificate) -> f64 {
        let (mut tot, mut out) = (0.0, 0.0);
        for b in &self.bands {
            for (k, v) in b.spectrum.iter().enumerate() {
                let w = v.norm_sqr();
                if w == 0.0 {
                    continue;
                }
                tot += w;
                let xi: Vec<f64> = self.zeta(k).iter().zip(&b.carrier).map(|(z, e)| z + e).collect();
                if !cert.contains(&xi) {
                    out += w;
                }
            }
        }
        if tot == 0.0 {
            0.0
        } else {
            out / tot
        }
    }

    /// Fraction of spectral ℓ² mass in the outer layer of the envelope box.
    pub fn edge_mass(&self) -> f64 {
        let (n, d) = (self.n(), self.dim());
        let (mut tot, mut edge) = (0.0, 0.0);
        let mut idx = [0usize; 3];
        for b in &self.bands {
            for (k, v) in b.spectrum.iter().enumerate() {
                let w = v.norm_sqr();
                tot += w;
                unflatten(k, n, d, &mut idx[..d]);
                if idx[..d].iter().any(|&i| i < 2 || i + 2 >= n) {
                    edge += w;
                }
            }
        }
        if tot == 0.0 {
            0.0
        } else {
            edge / tot
        }
    }

    /// Smallest and largest |ξ| (Euclidean) carrying nonzero spectrum.
    pub fn frequency_extent(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let mut any = false;
        for b in &self.bands {
            let peak = b.spectrum.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (k, v) in b.spectrum.iter().enumerate() {
                if v.norm() <= peak * 1e-14 {
                    continue;
                }
                any = true;
                let r = self.zeta(k).iter().zip(&b.carrier).map(|(z, e)| (z + e) * (z + e)).sum::<f64>().sqrt();
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        any.then_some((lo, hi))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let s = self.samples(&vec![0; self.dim()]);
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&self.half_width().to_le_bytes())?;
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        for v in s {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<SampledField> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let d = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let x = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        if !(1..=3).contains(&d) || !(x > 0.0) {
            return Err(Error::Parse(format!("bad field header (d = {d}, X = {x}, n = {n})")));
        }
        let grid = FrequencyGrid::new(d, n as f64 / (4.0 * x), n)?;
        let mut s = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            s.push(Complex64::new(re, f64::from_le_bytes(b8)));
        }
        SampledField::from_samples(grid, &s)
    }
}

/// ‖·‖_{L^p} of moduli arrays sampled on the cells of `f`'s grid, averaged over shifts.
pub fn lp_of_moduli(arrays: &[Vec<f64>], cell: f64, d: usize, p: f64) -> f64 {
    let m = arrays.iter().flat_map(|a| a.iter()).fold(0.0f64, |a, &b| a.max(b));
    if m == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return m;
    }
    let s: f64 = arrays.iter().map(|a| crate::sampling::par_sum(a.len(), |k| (a[k] / m).powf(p))).sum::<f64>() / arrays.len() as f64;
    m * (s * cell.powi(d as i32)).powf(1.0 / p)
}

pub fn lp_norm(f: &SampledField, p: f64, quad: &Quadrature) -> f64 {
    let arrays: Vec<Vec<f64>> = quad.shifts_for(f).iter().map(|s| f.modulus(s)).collect();
    lp_of_moduli(&arrays, f.cell(), f.dim(), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss_field(grid: FrequencyGrid, eta: &[f64], s: f64) -> SampledField {
        let mut f = SampledField::zero(grid);
        f.add_band_fn(eta, |z| {
            let r2: f64 = z.iter().map(|v| v * v).sum();
            Complex64::new((-std::f64::consts::PI * r2 / (s * s)).exp() / (s * s), 0.0)
        });
        f
    }

    #[test]
    fn gaussian_samples_match_closed_form() {
        // Ê(ζ) = e^{-π|ζ|²/s²}/s² ⇔ E(x) = e^{-π s²|x|²}
        let grid = FrequencyGrid::new(2, 4.0, 64).unwrap();
        let f = gauss_field(grid, &[0.0, 0.0], 1.0);
        let s = f.samples(&vec![0, 0]);
        let (n, h, x) = (64, f.cell(), f.half_width());
        for m in [0usize, 100, 2080, 4095] {
            let (a, b) = (m / n, m % n);
            let p = [-x + a as f64 * h, -x + b as f64 * h];
            let want = (-std::f64::consts::PI * (p[0] * p[0] + p[1] * p[1])).exp();
            assert!((s[m].re - want).abs() < 1e-12 && s[m].im.abs() < 1e-12);
        }
        assert!((lp_norm(&f, 2.0, &Quadrature::default()) - (0.5f64).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn modulated_phase_exact() {
        let grid = FrequencyGrid::new(1, 8.0, 64).unwrap();
        let eta = 1.0e9 + 0.25;
        let f = gauss_field(grid, &[eta], 2.0);
        let (lat, _) = f.lattice_carrier(&[eta]);
        let s = f.samples(&vec![0]);
        let x = f.half_width();
        // compare against phase computed from the exact rational carrier
        for m in [3usize, 17, 40] {
            let xm = -x + m as f64 * f.cell();
            // 1-d transform pair carries a factor 1/s
            let env = 0.5 * (-std::f64::consts::PI * 4.0 * xm * xm).exp();
            let turns = ((lat[0] * (m as i128 * 2 - 64)) as f64 / 4.0 / 64.0 * 2.0).rem_euclid(1.0);
            let want = Complex64::from_polar(env, TAU * turns);
            assert!((s[m] - want).norm() < 1e-9, "{m} {:?} {:?}", s[m], want);
        }
    }

    #[test]
    fn round_trip_samples() {
        let grid = FrequencyGrid::new(2, 2.0, 64).unwrap();
        let f = gauss_field(grid, &[0.5, 0.0], 0.7);
        let s = f.samples(&vec![0, 0]);
        let g = SampledField::from_samples(grid, &s).unwrap();
        let t = g.samples(&vec![0, 0]);
        for (a, b) in s.iter().zip(&t) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn file_round_trip() {
        let grid = FrequencyGrid::new(2, 2.0, 64).unwrap();
        let f = gauss_field(grid, &[0.0, 0.0], 0.7);
        let mut buf = vec![];
        f.write_to(&mut buf).unwrap();
        let g = SampledField::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(g.grid, grid);
        let (a, b) = (f.samples(&vec![0, 0]), g.samples(&vec![0, 0]));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-12));
    }
}
