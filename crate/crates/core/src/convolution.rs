//! Convolution estimates for band-limited functions with p ≤ 1, and the decay of |φ_δ| ∗ |φ_i|.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::atoms::{atom_grid, atoms_field, bump_hat, plant_scales, BumpAtom};
use crate::covers::{neighbor_bound, BumpShape, FourierProfile, FrequencyGrid};
use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::field::{lp_of_moduli, Band, SampledField};
use crate::linalg::{unit_ball_volume, ExpansiveMatrix};
use crate::report::{spread, Outcome, Report, Table};
use crate::sampling;

const TAU: f64 = std::f64::consts::TAU;

/// ĝ(ξ) = φ̂(|ξ − c|/r) Σ_k a_k e^{−2πi x_k·ξ}: translated copies of one bump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallField {
    pub centre: Vec<f64>,
    pub radius: f64,
    pub copies: Vec<(Vec<f64>, (f64, f64))>,
}

impl BallField {
    pub fn hat(&self, xi: &[f64]) -> Complex64 {
        let r = xi.iter().zip(&self.centre).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / self.radius;
        let b = bump_hat(r);
        if b == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let s: Complex64 = self
            .copies
            .iter()
            .map(|(x, c)| Complex64::new(c.0, c.1) * Complex64::from_polar(1.0, -TAU * x.iter().zip(xi).map(|(u, v)| u * v).sum::<f64>()))
            .sum();
        s * b
    }

    pub fn sample(&self, grid: FrequencyGrid) -> SampledField {
        let mut f = SampledField::zero(grid);
        f.add_band_fn(&vec![0.0; grid.dim], |z| self.hat(z));
        f
    }
}

/// f ∗ g for single-band fields on one grid with carrier 0.
pub fn convolve(f: &SampledField, g: &SampledField) -> Result<SampledField> {
    let plain = |h: &SampledField| h.bands.len() == 1 && h.bands[0].lattice.iter().all(|&l| l == 0);
    if f.grid != g.grid || !plain(f) || !plain(g) {
        return Err(Error::Grid("convolution needs two single-band fields on one grid".into()));
    }
    let spectrum = f.bands[0].spectrum.iter().zip(&g.bands[0].spectrum).map(|(a, b)| a * b).collect();
    let d = f.dim();
    Ok(SampledField { grid: f.grid, bands: vec![Band { lattice: vec![0; d], carrier: vec![0.0; d], spectrum }], certificate: None })
}

/// m(B_{r₁}(c₁) − B_{r₂}(c₂)) = m(B_{r₁+r₂}).
pub fn ball_difference_measure(d: usize, r1: f64, r2: f64) -> f64 {
    unit_ball_volume(d) * (r1 + r2).powi(d as i32)
}

fn simpson(n: usize, h: f64, f: impl Fn(usize) -> f64) -> f64 {
    let mut s = f(0) + f(n);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k);
    }
    s * h / 3.0
}

/// ‖φ‖_{L^p} (or ‖φ ∗ φ‖_{L^p} when `squared`) in the plane, by Hankel quadrature up to |x| = 128.
pub fn radial_bump_norm(p: f64, squared: bool) -> f64 {
    let (nr, rmax) = (2560, 128.0);
    let nk = 16384;
    let hk = 1.0 / nk as f64;
    let hat: Vec<f64> = (0..=nk)
        .map(|k| {
            let b = bump_hat(k as f64 * hk);
            if squared { b * b } else { b }
        })
        .collect();
    let hr = rmax / nr as f64;
    let vals: Vec<f64> = (0..=nr)
        .into_par_iter()
        .map(|a| {
            let r = a as f64 * hr;
            let phi = TAU * simpson(nk, hk, |k| hat[k] * libm::j0(TAU * k as f64 * hk * r) * k as f64 * hk);
            phi.abs().powf(p) * r
        })
        .collect();
    (TAU * simpson(nr, hr, |a| vals[a])).powf(1.0 / p)
}

/// ‖·‖_{L^p} for several p from one set of samples.
fn lp_many(f: &SampledField, ps: &[f64]) -> Vec<f64> {
    let m = f.modulus(&vec![0; f.dim()]);
    let arrays = [m];
    ps.iter().map(|&p| lp_of_moduli(&arrays, f.cell(), f.dim(), p)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvolutionConfig {
    pub pairs: usize,
    pub ps: Vec<f64>,
    pub half_width: f64,
    pub n: usize,
    pub radii: (f64, f64),
    /// centres lie in |c| ≤ centre
    pub centre: f64,
    /// translations lie in |x| ≤ spread
    pub spread: f64,
    pub max_copies: usize,
    pub slack: f64,
    pub seed: u64,
    /// matrices for the decay battery
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub cells: Vec<i64>,
    pub decay_bound: f64,
}

impl Default for ConvolutionConfig {
    fn default() -> Self {
        Self {
            pairs: 100,
            ps: vec![0.5, 1.0],
            half_width: 4.0,
            n: 1024,
            radii: (0.5, 1.0),
            centre: 2.0,
            spread: 8.0,
            max_copies: 4,
            slack: 1e-6,
            seed: 13,
            matrices: vec![vec![vec![2.0, 0.0], vec![0.0, 2.0]], vec![vec![2.0, 0.0], vec![0.0, 4.0]]],
            cells: vec![-1, 0, 1],
            decay_bound: 10.0,
        }
    }
}

fn random_ball_field<R: rand::Rng>(r: &mut R, cfg: &ConvolutionConfig, d: usize, centre: Vec<f64>, radius: f64) -> BallField {
    let m = 1 + r.random_range(0..cfg.max_copies);
    let copies = (0..m)
        .map(|_| {
            let rad = cfg.spread * r.random::<f64>().powf(1.0 / d as f64);
            let x = sampling::direction(r, d).into_iter().map(|u| u * rad).collect();
            (x, (sampling::normal(r), sampling::normal(r)))
        })
        .collect();
    BallField { centre, radius, copies }
}

fn point_in_ball<R: rand::Rng>(r: &mut R, d: usize, c: &[f64], rad: f64) -> Vec<f64> {
    let s = rad * r.random::<f64>().powf(1.0 / d as f64);
    sampling::direction(r, d).into_iter().zip(c).map(|(u, c)| c + u * s).collect()
}

/// One random pair: ψ̂ in K₁ = B_{r₁}(c₁), f̂ in K₂ = B_{r₂}(c₂) with overlapping balls.
pub fn random_pair(cfg: &ConvolutionConfig, d: usize, k: usize) -> (BallField, BallField) {
    let mut r = sampling::rng(cfg.seed, k as u64);
    let (lo, hi) = cfg.radii;
    let r1 = lo + (hi - lo) * rand::Rng::random::<f64>(&mut r);
    let r2 = lo + (hi - lo) * rand::Rng::random::<f64>(&mut r);
    let c1 = point_in_ball(&mut r, d, &vec![0.0; d], cfg.centre);
    let c2 = loop {
        let c = point_in_ball(&mut r, d, &c1, r1 + r2);
        if c.iter().map(|v| v * v).sum::<f64>().sqrt() <= cfg.centre {
            break c;
        }
    };
    (random_ball_field(&mut r, cfg, d, c1, r1), random_ball_field(&mut r, cfg, d, c2, r2))
}

/// sup_x (|φ_δ| ∗ |φ_i|)(x) / (δ^d (1 + |δx|)^{−M}) for each M, over |δx| ≤ 16.
pub fn decay_constant(prof: &FourierProfile, i: i64, delta: f64, ms: &[f64]) -> Result<Vec<f64>> {
    let d = prof.dim();
    // coarse grid carrying |φ_δ|, twice the measured window to keep wrap-around away
    let (window, nc) = (16.0, 512);
    let cg = atom_grid(d, delta, 2.0 * window, nc)?;
    let atom = BumpAtom::new(delta, vec![0.0; d], Complex64::new(1.0, 0.0))?;
    let kernel = atoms_field(cg, &[atom]).modulus(&vec![0; d]);
    let xc = cg.spatial_half_width();
    let hc = 2.0 * xc / nc as f64;
    let mass = profile_mass(prof, i, xc, hc, nc)?;
    // circular convolution of the binned mass with |φ_δ|
    let half = nc / 2;
    let len = nc.pow(d as u32);
    let shift = |idx: usize| -> usize {
        let mut out = 0;
        let mut r = idx;
        let mut stride = 1;
        for _ in 0..d {
            out += ((r % nc + half) % nc) * stride;
            r /= nc;
            stride *= nc;
        }
        out
    };
    let mut kb: Vec<Complex64> = (0..len).map(|k| Complex64::new(kernel[shift(k)], 0.0)).collect();
    let mut mb: Vec<Complex64> = mass.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut kb, nc, d, false);
    fft_nd(&mut mb, nc, d, false);
    let mut s: Vec<Complex64> = kb.iter().zip(&mb).map(|(a, b)| a * b).collect();
    fft_nd(&mut s, nc, d, true);
    let grid_pos = |idx: usize| -> Vec<f64> {
        let mut out = vec![0.0; d];
        let mut r = idx;
        for a in (0..d).rev() {
            out[a] = -xc + (r % nc) as f64 * hc;
            r /= nc;
        }
        out
    };
    Ok(ms
        .iter()
        .map(|&m| {
            (0..len)
                .into_par_iter()
                .filter_map(|a| {
                    let x = grid_pos(a);
                    let u = delta * x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (u <= window).then(|| (s[a].re / len as f64).max(0.0) / (delta.powi(d as i32) * (1.0 + u).powf(-m)))
                })
                .reduce(|| 0.0, f64::max)
        })
        .collect())
}

/// |φ_i| sampled on its own grid, integrated over the cells of the coarse grid (x = −X + c h).
fn profile_mass(prof: &FourierProfile, i: i64, xc: f64, hc: f64, nc: usize) -> Result<Vec<f64>> {
    let d = prof.dim();
    let p = prof.dilate(i);
    let dual = prof.dual();
    let (_, hi) = prof.support();
    let reach = hi * dual.powers().power(i).rmul_plain(dual.ellipsoid.factor_inv()).ln_norm().exp();
    let ev = p.evaluator();
    let ce = ev.at_carrier(&vec![0.0; d]);
    let mut n1 = 256;
    let modulus = loop {
        let g = FrequencyGrid::new(d, 1.05 * reach, n1)?;
        let mut f = SampledField::zero(g);
        f.add_band_fn(&vec![0.0; d], |z| Complex64::new(ce.value(z), 0.0));
        let m = f.modulus(&vec![0; d]);
        let top = m.iter().copied().fold(0.0, f64::max);
        let edge = (0..m.len())
            .filter(|&k| {
                let mut r = k;
                (0..d).any(|_| {
                    let c = r % n1;
                    r /= n1;
                    c < n1 / 16 || c >= n1 - n1 / 16
                })
            })
            .map(|k| m[k])
            .fold(0.0, f64::max);
        if edge <= 1e-6 * top || n1 >= 2048 {
            break (g, m);
        }
        n1 *= 2;
    };
    let (g, m) = modulus;
    let x1 = g.spatial_half_width();
    let h1 = 2.0 * x1 / n1 as f64;
    let mut mass = vec![0.0; nc.pow(d as u32)];
    for (k, v) in m.iter().enumerate() {
        let mut r = k;
        let mut flat = 0usize;
        let mut idx = vec![0usize; d];
        let mut inside = true;
        for a in (0..d).rev() {
            let y = -x1 + (r % n1) as f64 * h1;
            r /= n1;
            let c = ((y + xc) / hc).round();
            if c < 0.0 || c >= nc as f64 {
                inside = false;
                break;
            }
            idx[a] = c as usize;
        }
        if !inside {
            continue;
        }
        for a in 0..d {
            flat = flat * nc + idx[a];
        }
        mass[flat] += v * h1.powi(d as i32);
    }
    Ok(mass)
}

/// The p ≤ 1 convolution inequality on random pairs, the scaling check for a single atom,
/// the dilated form on 2·I, and the decay constant of |φ_δ| ∗ |φ_i| on planted atoms.
pub fn convolution_checks(shape: BumpShape, cfg: &ConvolutionConfig) -> Result<Report> {
    let d = 2;
    let grid = FrequencyGrid::new(d, cfg.half_width, cfg.n)?;
    let mut ineq = Table::new("inequality", &["pair", "p", "lhs", "rhs", "ratio"]);
    let rows: Vec<Vec<Vec<f64>>> = (0..cfg.pairs)
        .into_par_iter()
        .map(|k| -> Result<Vec<Vec<f64>>> {
            let (psi, f) = random_pair(cfg, d, k);
            let (fs, gs) = (f.sample(grid), psi.sample(grid));
            let conv = convolve(&fs, &gs)?;
            let (nf, ng, nc) = (lp_many(&fs, &cfg.ps), lp_many(&gs, &cfg.ps), lp_many(&conv, &cfg.ps));
            let m = ball_difference_measure(d, psi.radius, f.radius);
            Ok(cfg
                .ps
                .iter()
                .enumerate()
                .map(|(t, &p)| {
                    let rhs = m.powf(1.0 / p - 1.0) * nf[t] * ng[t];
                    vec![k as f64, p, nc[t], rhs, nc[t] / rhs]
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    ineq.rows = rows.into_iter().flatten().collect();
    let mut ok = ineq.rows.iter().all(|r| r[2] <= r[3] * (1.0 + cfg.slack));

    // single atom: grid norms against δ^{d(1−1/p)} times the radial norm of the unit bump
    let mut scaling = Table::new("scaling", &["p", "radius", "grid_f", "closed_f", "grid_ff", "closed_ff", "rhs"]);
    // wide spatial window: at p = 1/2 the tails matter
    let base_grid = FrequencyGrid::new(d, 4.0, 2048)?;
    let nu: Vec<f64> = cfg.ps.iter().map(|&p| radial_bump_norm(p, false)).collect();
    let nuu: Vec<f64> = cfg.ps.iter().map(|&p| radial_bump_norm(p, true)).collect();
    for r in [0.6, 0.8] {
        let atom = BallField { centre: vec![0.5, -0.3], radius: r, copies: vec![(vec![0.0; d], (1.0, 0.0))] };
        let fs = atom.sample(base_grid);
        let ff = convolve(&fs, &fs)?;
        let (nf, nff) = (lp_many(&fs, &cfg.ps), lp_many(&ff, &cfg.ps));
        for (t, &p) in cfg.ps.iter().enumerate() {
            let s = r.powf(d as f64 * (1.0 - 1.0 / p));
            let (cf, cff) = (s * nu[t], s * nuu[t]);
            ok &= ((nf[t] - cf) / cf).abs() < 0.01 && ((nff[t] - cff) / cff).abs() < 0.01;
            let rhs = ball_difference_measure(d, r, r).powf(1.0 / p - 1.0) * cf * cf;
            ok &= cff <= rhs * (1.0 + cfg.slack);
            scaling.push(vec![p, r, nf[t], cf, nff[t], cff, rhs]);
        }
    }

    // dilated form on 2·I: supports in (A*)^i B_R, constant |det A|^{i(1/p−1)}
    let mut dilated = Table::new("dilated", &["i", "p", "constant"]);
    for i in -1..=1i64 {
        let s = 2f64.powi(i as i32);
        let g = FrequencyGrid::new(d, cfg.half_width * s, cfg.n)?;
        let f = BallField { centre: vec![1.5 * s, 0.0], radius: 0.5 * s, copies: vec![(vec![0.0; d], (1.0, 0.0)), (vec![2.0 / s, 1.0 / s], (0.0, 1.0))] };
        let h = BallField { centre: vec![1.2 * s, 0.4 * s], radius: 0.5 * s, copies: vec![(vec![-1.0 / s, 0.0], (1.0, 0.0))] };
        let (fs, hs) = (f.sample(g), h.sample(g));
        let conv = convolve(&fs, &hs)?;
        let (nf, nh, nc) = (lp_many(&fs, &cfg.ps), lp_many(&hs, &cfg.ps), lp_many(&conv, &cfg.ps));
        for (t, &p) in cfg.ps.iter().enumerate() {
            let w = 4f64.powf(i as f64 * (1.0 / p - 1.0));
            dilated.push(vec![i as f64, p, nc[t] / (w * nf[t] * nh[t])]);
        }
    }

    // decay of |φ_δ| ∗ |φ_i| for atoms planted in (A*)^ℓQ, |i − ℓ| ≤ N, at M = d/p + 1
    let ms: Vec<f64> = cfg.ps.iter().map(|p| d as f64 / p + 1.0).collect();
    let mut decay = Table::new("decay", &["matrix", "cell", "i", "delta", "M", "constant"]);
    // the constant may depend on i − ℓ but not on the cell
    let mut spreads = Table::new("decay_spread", &["matrix", "M", "offset", "max", "spread"]);
    for (mi, rows) in cfg.matrices.iter().enumerate() {
        let a = ExpansiveMatrix::from_rows(rows)?;
        let prof = FourierProfile::new(&a, shape)?;
        let n = neighbor_bound(&prof)?;
        for &l in &cfg.cells {
            let delta = plant_scales(&a, &prof, &[l])?.delta();
            for i in l - n..=l + n {
                let cs = decay_constant(&prof, i, delta, &ms)?;
                for (m, c) in ms.iter().zip(cs) {
                    decay.push(vec![mi as f64, l as f64, i as f64, delta, *m, c]);
                }
            }
        }
        for &m in &ms {
            for off in -n..=n {
                let v: Vec<f64> = decay.rows.iter().filter(|r| r[0] == mi as f64 && r[4] == m && r[2] - r[1] == off as f64).map(|r| r[5]).collect();
                let s = spread(&v);
                ok &= s < cfg.decay_bound;
                spreads.push(vec![mi as f64, m, off as f64, v.iter().copied().fold(0.0, f64::max), s]);
            }
        }
    }
    let mut rep = Report::new(
        "convolution",
        json!({"pairs": cfg.pairs, "p": cfg.ps, "radii": [cfg.radii.0, cfg.radii.1], "centre": cfg.centre, "slack": cfg.slack, "matrices": cfg.matrices, "cells": cfg.cells, "decay_bound": cfg.decay_bound}),
    );
    rep.seeds = vec![cfg.seed];
    rep.grid = json!({"n": cfg.n, "half_width": cfg.half_width});
    rep.tables = vec![ineq, scaling, dilated, decay, spreads];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}
