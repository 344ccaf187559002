//! Dilated cubes A^i([0,1]^d + k), tents, and the sequence norms ḟ⁰_{1,∞} and ḟ⁰_{∞,1}.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::ExpansiveMatrix;
use crate::report::{Outcome, Report, Table};
use crate::sampling;

/// Largest |scale| with a precomputed power of A.
pub const SCALE_WINDOW: i64 = 48;
/// Largest support for the subcollection enumeration.
pub const BRUTE_MAX: usize = 14;
const QUAD_POINTS: usize = 48;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DilatedCube {
    pub i: i64,
    pub k: Vec<i64>,
}

impl DilatedCube {
    pub fn new(i: i64, k: Vec<i64>) -> Self {
        Self { i, k }
    }

    pub fn scale(&self) -> i64 {
        self.i
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }
}

/// Finitely supported c = (c_D); zero coefficients are never stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CubeSequence {
    entries: BTreeMap<DilatedCube, Complex64>,
}

impl CubeSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(d: DilatedCube, c: Complex64) -> Self {
        let mut s = Self::new();
        s.insert(d, c);
        s
    }

    pub fn insert(&mut self, d: DilatedCube, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            self.entries.remove(&d);
        } else {
            self.entries.insert(d, c);
        }
    }

    pub fn get(&self, d: &DilatedCube) -> Complex64 {
        self.entries.get(d).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DilatedCube, &Complex64)> {
        self.entries.iter()
    }

    pub fn cubes(&self) -> Vec<DilatedCube> {
        self.entries.keys().cloned().collect()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.keys().next().map(DilatedCube::dim)
    }

    pub fn scale_bounds(&self) -> Option<(i64, i64)> {
        let lo = self.entries.keys().map(|d| d.i).min()?;
        let hi = self.entries.keys().map(|d| d.i).max()?;
        Some((lo, hi))
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = Self::new();
        for (d, c) in self.iter() {
            out.insert(d.clone(), c * s);
        }
        out
    }

    /// Lines `i k_1 … k_d re im`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        let mut dim = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", n + 1));
            if tok.len() < 4 {
                return Err(bad("expected `i k_1 .. k_d re im`"));
            }
            let d = tok.len() - 3;
            if *dim.get_or_insert(d) != d {
                return Err(bad("dimension changes"));
            }
            let int = |s: &str| s.parse::<i64>().map_err(|_| bad(&format!("not an integer: {s}")));
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("not a number: {s}")));
            let i = int(tok[0])?;
            let k = tok[1..=d].iter().map(|s| int(s)).collect::<Result<Vec<_>>>()?;
            let c = Complex64::new(real(tok[d + 1])?, real(tok[d + 2])?);
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(bad("coefficient not finite"));
            }
            let cube = DilatedCube::new(i, k);
            let prev = out.get(&cube);
            out.insert(cube, prev + c);
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (d, c) in self.iter() {
            let ks: Vec<String> = d.k.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{} {} {:e} {:e}", d.i, ks.join(" "), c.re, c.im);
        }
        s
    }
}

/// ⟨c, c′⟩ = Σ c_D conj(c′_D).
pub fn pairing(c: &CubeSequence, cp: &CubeSequence) -> Complex64 {
    c.iter().map(|(d, v)| v * cp.get(d).conj()).sum()
}

/// Powers of A over the scale window, and the geometry of its cubes.
#[derive(Clone, Debug)]
pub struct CubeGeometry {
    d: usize,
    det: f64,
    powers: Vec<DMatrix<f64>>,
}

impl CubeGeometry {
    pub fn new(a: &ExpansiveMatrix) -> Result<Self> {
        let d = a.dim();
        if d > 3 {
            return Err(Error::Param(format!("cube geometry needs d <= 3, got {d}")));
        }
        let w = SCALE_WINDOW as usize;
        let mut powers = vec![DMatrix::identity(d, d); 2 * w + 1];
        for n in 1..=w {
            powers[w + n] = a.entries() * &powers[w + n - 1];
            powers[w - n] = a.inverse() * &powers[w + 1 - n];
        }
        Ok(Self { d, det: a.det_abs(), powers })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn power(&self, i: i64) -> Result<&DMatrix<f64>> {
        if i.abs() > SCALE_WINDOW {
            return Err(Error::ScaleWindow(SCALE_WINDOW));
        }
        Ok(&self.powers[(i + SCALE_WINDOW) as usize])
    }

    /// m(D) = |det A|^i.
    pub fn measure(&self, c: &DilatedCube) -> f64 {
        self.det.powi(c.i as i32)
    }

    fn check(&self, c: &DilatedCube) -> Result<()> {
        if c.dim() != self.d {
            return Err(Error::DimMismatch(c.dim(), self.d));
        }
        self.power(c.i).map(|_| ())
    }

    /// Corners of A^{i−s}(Q + k), i.e. D seen in the frame where scale-s cubes are unit cubes.
    fn corners_in(&self, c: &DilatedCube, s: i64) -> Result<Vec<Vec<f64>>> {
        let m = self.power(c.i - s)?;
        let d = self.d;
        Ok(corner_order(d)
            .into_iter()
            .map(|v| {
                let y: Vec<f64> = (0..d).map(|a| v[a] + c.k[a] as f64).collect();
                (0..d).map(|r| (0..d).map(|a| m[(r, a)] * y[a]).sum()).collect()
            })
            .collect())
    }

    /// Is x ∈ A^i(Q + k)?
    fn contains(&self, c: &DilatedCube, x: &[f64]) -> bool {
        let inv = &self.powers[(SCALE_WINDOW - c.i) as usize];
        (0..self.d).all(|r| {
            let y: f64 = (0..self.d).map(|a| inv[(r, a)] * x[a]).sum::<f64>() - c.k[r] as f64;
            (0.0..1.0).contains(&y)
        })
    }

    /// m(D ∩ E), computed in the frame of the smaller cube.
    pub fn overlap(&self, a: &DilatedCube, b: &DilatedCube) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let (small, big) = if a.i <= b.i { (a, b) } else { (b, a) };
        let s = small.i;
        let shift: Vec<f64> = small.k.iter().map(|&v| v as f64).collect();
        let poly: Vec<Vec<f64>> = self.corners_in(big, s)?.into_iter().map(|p| p.iter().zip(&shift).map(|(x, o)| x - o).collect()).collect();
        let unit = match self.d {
            1 => {
                let (lo, hi) = (poly[0][0].min(poly[1][0]), poly[0][0].max(poly[1][0]));
                (hi.min(1.0) - lo.max(0.0)).max(0.0)
            }
            2 => clip_unit_square(poly.iter().map(|p| [p[0], p[1]]).collect()),
            _ => {
                let m = self.power(s - big.i)?;
                let kb: Vec<f64> = big.k.iter().map(|&v| v as f64).collect();
                let n = QUAD_POINTS;
                let h = 1.0 / n as f64;
                let mut hit = 0usize;
                for idx in 0..n * n * n {
                    let x = [(idx % n) as f64 + 0.5, ((idx / n) % n) as f64 + 0.5, (idx / (n * n)) as f64 + 0.5].map(|v| v * h);
                    let z: Vec<f64> = (0..3).map(|a| x[a] + shift[a]).collect();
                    let inside = (0..3).all(|r| {
                        let y: f64 = (0..3).map(|a| m[(r, a)] * z[a]).sum::<f64>() - kb[r];
                        (0.0..1.0).contains(&y)
                    });
                    hit += inside as usize;
                }
                hit as f64 * h * h * h
            }
        };
        Ok(unit * self.det.powi(s as i32))
    }

    /// Positive-measure overlap, relative tolerance 1e-12.
    pub fn overlaps(&self, a: &DilatedCube, b: &DilatedCube) -> Result<bool> {
        let m = self.measure(a).min(self.measure(b));
        Ok(self.overlap(a, b)? > 1e-12 * m)
    }

    /// Scale-s cubes meeting D in positive measure.
    pub fn cubes_meeting(&self, s: i64, c: &DilatedCube) -> Result<Vec<DilatedCube>> {
        self.check(c)?;
        self.power(s)?;
        let pts = self.corners_in(c, s)?;
        let d = self.d;
        let lo: Vec<i64> = (0..d).map(|a| pts.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min).floor() as i64).collect();
        let hi: Vec<i64> = (0..d).map(|a| pts.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64).collect();
        let mut out = vec![];
        let mut k = lo.clone();
        loop {
            let cand = DilatedCube::new(s, k.clone());
            if self.overlaps(&cand, c)? {
                out.push(cand);
            }
            let mut a = 0;
            loop {
                if a == d {
                    return Ok(out);
                }
                k[a] += 1;
                if k[a] < hi[a] {
                    break;
                }
                k[a] = lo[a];
                a += 1;
            }
        }
    }

    /// 𝒯(D) truncated to scales ≥ floor.
    pub fn tent(&self, c: &DilatedCube, floor: i64) -> Result<Vec<DilatedCube>> {
        if floor > c.i {
            return Err(Error::Precondition(format!("tent floor {floor} above scale {}", c.i)));
        }
        let mut out = vec![];
        for s in floor..=c.i {
            out.extend(self.cubes_meeting(s, c)?);
        }
        Ok(out)
    }

    /// ⌈sup_{m ≥ 0} diam_∞(A^{−m}Q)⌉: every tent lies in ⋃_{|n|_∞ ≤ N}(D + A^{scale D}n).
    pub fn tent_radius(&self) -> i64 {
        let mut best = 0.0f64;
        for m in 0..=SCALE_WINDOW {
            let p = &self.powers[(SCALE_WINDOW - m) as usize];
            let diam = (0..self.d).map(|r| (0..self.d).map(|a| p[(r, a)].abs()).sum::<f64>()).fold(0.0, f64::max);
            best = best.max(diam);
            if diam < 1e-12 {
                break;
            }
        }
        (best - 1e-12).ceil() as i64
    }

    /// Smallest N with D′ ⊆ ⋃_{|n|_∞ ≤ N}(D + A^{scale D}n) for every D′ in the list.
    pub fn containment_radius(&self, c: &DilatedCube, members: &[DilatedCube]) -> Result<i64> {
        let mut n = 0i64;
        for e in members {
            for p in self.corners_in(e, c.i)? {
                for (a, &v) in p.iter().enumerate() {
                    let y = v - c.k[a] as f64;
                    n = n.max((-y - 1e-9).ceil() as i64).max((y - 1.0 - 1e-9).ceil() as i64);
                }
            }
        }
        Ok(n)
    }

    /// Visits the cells of the arrangement of the cubes with the active indices and the cell measure.
    /// Exact for d ≤ 2; d = 3 uses a midpoint lattice.
    pub fn arrangement(&self, cubes: &[DilatedCube], mut visit: impl FnMut(&[usize], f64)) -> Result<bool> {
        for c in cubes {
            self.check(c)?;
        }
        if cubes.is_empty() {
            return Ok(true);
        }
        match self.d {
            1 => {
                let iv: Vec<(f64, f64)> = cubes
                    .iter()
                    .map(|c| {
                        let p = self.corners_in(c, 0).expect("checked");
                        (p[0][0].min(p[1][0]), p[0][0].max(p[1][0]))
                    })
                    .collect();
                sweep_line(&iv, 1.0, &mut visit);
                Ok(true)
            }
            2 => {
                let polys: Vec<Vec<[f64; 2]>> = cubes.iter().map(|c| self.corners_in(c, 0).expect("checked").iter().map(|p| [p[0], p[1]]).collect()).collect();
                slab_sweep(&polys, &mut visit);
                Ok(true)
            }
            _ => {
                let pts: Vec<Vec<f64>> = cubes.iter().flat_map(|c| self.corners_in(c, 0).expect("checked")).collect();
                let lo: Vec<f64> = (0..3).map(|a| pts.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min)).collect();
                let hi: Vec<f64> = (0..3).map(|a| pts.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max)).collect();
                let n = 2 * QUAD_POINTS;
                let h: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]) / n as f64).collect();
                let vol = h.iter().product::<f64>();
                let mut active = vec![];
                for idx in 0..n * n * n {
                    let ix = [idx % n, (idx / n) % n, idx / (n * n)];
                    let x: Vec<f64> = (0..3).map(|a| lo[a] + (ix[a] as f64 + 0.5) * h[a]).collect();
                    active.clear();
                    active.extend((0..cubes.len()).filter(|&t| self.contains(&cubes[t], &x)));
                    if !active.is_empty() {
                        visit(&active, vol);
                    }
                }
                Ok(false)
            }
        }
    }

    /// (mask, measure) of each nonempty cell of the arrangement, merged by mask.
    pub fn cells(&self, cubes: &[DilatedCube]) -> Result<Vec<(u64, f64)>> {
        if cubes.len() > 64 {
            return Err(Error::Param("at most 64 cubes per arrangement mask".into()));
        }
        let mut map: BTreeMap<u64, f64> = BTreeMap::new();
        self.arrangement(cubes, |act, m| {
            let mask = act.iter().fold(0u64, |s, &t| s | 1 << t);
            *map.entry(mask).or_default() += m;
        })?;
        Ok(map.into_iter().collect())
    }

    /// m(⋃ D).
    pub fn union_measure(&self, cubes: &[DilatedCube]) -> Result<f64> {
        let mut s = 0.0;
        self.arrangement(cubes, |_, m| s += m)?;
        Ok(s)
    }
}

/// Unit-cube corners in cyclic order for d = 2.
fn corner_order(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![0.0], vec![1.0]],
        2 => vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
        _ => (0..1usize << d).map(|b| (0..d).map(|a| ((b >> a) & 1) as f64).collect()).collect(),
    }
}

fn shoelace(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    (0..n).map(|t| p[t][0] * p[(t + 1) % n][1] - p[(t + 1) % n][0] * p[t][1]).sum::<f64>().abs() / 2.0
}

/// Area of a convex polygon clipped to [0,1]².
fn clip_unit_square(mut poly: Vec<[f64; 2]>) -> f64 {
    for (axis, bound, keep_below) in [(0, 0.0, false), (0, 1.0, true), (1, 0.0, false), (1, 1.0, true)] {
        let inside = |p: &[f64; 2]| if keep_below { p[axis] <= bound } else { p[axis] >= bound };
        let mut out = Vec::with_capacity(poly.len() + 2);
        for t in 0..poly.len() {
            let (p, q) = (poly[t], poly[(t + 1) % poly.len()]);
            let (ip, iq) = (inside(&p), inside(&q));
            if ip {
                out.push(p);
            }
            if ip != iq {
                let s = (bound - p[axis]) / (q[axis] - p[axis]);
                out.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
            }
        }
        poly = out;
        if poly.len() < 3 {
            return 0.0;
        }
    }
    shoelace(&poly)
}

/// 1D arrangement of intervals, each cell weighted by `width`.
fn sweep_line(iv: &[(f64, f64)], width: f64, visit: &mut impl FnMut(&[usize], f64)) {
    let mut ev: Vec<(f64, usize, bool)> = iv.iter().enumerate().flat_map(|(t, &(a, b))| [(a, t, true), (b, t, false)]).collect();
    ev.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
    let mut on = vec![false; iv.len()];
    let mut active = vec![];
    for w in 0..ev.len() {
        let (y, t, start) = ev[w];
        on[t] = start;
        if w + 1 < ev.len() {
            let len = ev[w + 1].0 - y;
            if len > 0.0 {
                active.clear();
                active.extend((0..iv.len()).filter(|&s| on[s]));
                if !active.is_empty() {
                    visit(&active, len * width);
                }
            }
        }
    }
}

/// Vertical slabs between vertex and edge-crossing abscissae. Inside a slab no edges cross,
/// so every cell length is affine in x and the midpoint rule is exact.
fn slab_sweep(polys: &[Vec<[f64; 2]>], visit: &mut impl FnMut(&[usize], f64)) {
    let edges: Vec<([f64; 2], [f64; 2])> = polys.iter().flat_map(|p| (0..p.len()).map(move |t| (p[t], p[(t + 1) % p.len()]))).collect();
    let mut xs: Vec<f64> = polys.iter().flatten().map(|p| p[0]).collect();
    for a in 0..edges.len() {
        for b in a + 1..edges.len() {
            if let Some(x) = crossing(edges[a], edges[b]) {
                xs.push(x);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut iv = vec![(0.0, 0.0); polys.len()];
    let mut live = vec![];
    for w in xs.windows(2) {
        let width = w[1] - w[0];
        if width <= 0.0 {
            continue;
        }
        let xm = 0.5 * (w[0] + w[1]);
        live.clear();
        for (t, p) in polys.iter().enumerate() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for s in 0..p.len() {
                let (a, b) = (p[s], p[(s + 1) % p.len()]);
                if (a[0] < xm) != (b[0] < xm) {
                    let y = a[1] + (xm - a[0]) / (b[0] - a[0]) * (b[1] - a[1]);
                    lo = lo.min(y);
                    hi = hi.max(y);
                }
            }
            if hi > lo {
                iv[live.len()] = (lo, hi);
                live.push(t);
            }
        }
        let sub = &iv[..live.len()];
        sweep_line(sub, width, &mut |act, m| {
            let mapped: Vec<usize> = act.iter().map(|&s| live[s]).collect();
            visit(&mapped, m);
        });
    }
}

fn crossing((p, q): ([f64; 2], [f64; 2]), (r, s): ([f64; 2], [f64; 2])) -> Option<f64> {
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let (ex, ey) = (s[0] - r[0], s[1] - r[1]);
    let den = dx * ey - dy * ex;
    if den.abs() <= 1e-300 {
        return None;
    }
    let t = ((r[0] - p[0]) * ey - (r[1] - p[1]) * ex) / den;
    let u = ((r[0] - p[0]) * dy - (r[1] - p[1]) * dx) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| p[0] + t * dx)
}

/// ∫ sup_D m(D)^{−1/2}|c_D| 1_D(x) dx.
pub fn f1inf_norm(g: &CubeGeometry, c: &CubeSequence) -> Result<f64> {
    let cubes = c.cubes();
    let w: Vec<f64> = c.iter().map(|(d, v)| v.norm() / g.measure(d).sqrt()).collect();
    let mut s = 0.0;
    g.arrangement(&cubes, |act, m| s += m * act.iter().map(|&t| w[t]).fold(0.0, f64::max))?;
    Ok(s)
}

/// Candidate D′ at scale s: cubes meeting some support cube of scale ≤ s.
fn candidates(g: &CubeGeometry, c: &CubeSequence, s: i64) -> Result<BTreeSet<DilatedCube>> {
    let mut out = BTreeSet::new();
    for d in c.cubes().iter().filter(|d| d.i <= s) {
        out.extend(g.cubes_meeting(s, d)?);
    }
    Ok(out)
}

fn sup_over_cubes(g: &CubeGeometry, c: &CubeSequence, margin: i64, term: impl Fn(&DilatedCube, &DilatedCube, f64) -> Result<f64> + Sync) -> Result<(f64, Option<DilatedCube>)> {
    let Some((lo, hi)) = c.scale_bounds() else { return Ok((0.0, None)) };
    let mut best = (0.0, None);
    for s in lo..=hi + margin {
        let cand: Vec<DilatedCube> = candidates(g, c, s)?.into_iter().collect();
        let vals = cand
            .par_iter()
            .map(|dp| -> Result<f64> {
                let mut t = 0.0;
                for (d, v) in c.iter().filter(|(d, _)| d.i <= s) {
                    t += term(d, dp, v.norm())?;
                }
                Ok(t / g.measure(dp))
            })
            .collect::<Result<Vec<f64>>>()?;
        for (v, dp) in vals.into_iter().zip(cand) {
            if v > best.0 {
                best = (v, Some(dp));
            }
        }
    }
    Ok(best)
}

/// sup_{D′} m(D′)^{−1} Σ_{scale D ≤ scale D′} m(D)^{−1/2}|c_D| m(D ∩ D′), over scales up to max + margin.
pub fn finf1_norm_def(g: &CubeGeometry, c: &CubeSequence, margin: i64) -> Result<f64> {
    Ok(sup_over_cubes(g, c, margin, |d, dp, v| Ok(v / g.measure(d).sqrt() * g.overlap(d, dp)?))?.0)
}

/// sup_{D′} m(D′)^{−1} Σ_{D ∈ 𝒯(D′)} m(D)^{1/2}|c_D|.
pub fn finf1_norm_tent(g: &CubeGeometry, c: &CubeSequence, margin: i64) -> Result<f64> {
    Ok(sup_over_cubes(g, c, margin, |d, dp, v| Ok(if g.overlaps(d, dp)? { v * g.measure(d).sqrt() } else { 0.0 }))?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarlesonMethod {
    Bruteforce,
    Greedy,
}

impl std::str::FromStr for CarlesonMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bruteforce" => Ok(Self::Bruteforce),
            "greedy" => Ok(Self::Greedy),
            _ => Err(Error::Param(format!("unknown Carleson method {s}"))),
        }
    }
}

/// lower ≤ C ≤ upper, where C is the best constant in Σ_{D ∈ 𝒟′}|c_D| m(D)^{1/2} ≤ C m(⋃𝒟′).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonEstimate {
    pub lower: f64,
    pub upper: f64,
    /// the maximising subcollection (bruteforce) or the disjoint layer cubes (greedy)
    pub witness: Vec<DilatedCube>,
}

fn carleson_weights(g: &CubeGeometry, c: &CubeSequence) -> Vec<f64> {
    c.iter().map(|(d, v)| v.norm() * g.measure(d).sqrt()).collect()
}

pub fn carleson_constant(g: &CubeGeometry, c: &CubeSequence, method: CarlesonMethod) -> Result<CarlesonEstimate> {
    match method {
        CarlesonMethod::Bruteforce => carleson_bruteforce(g, c),
        CarlesonMethod::Greedy => carleson_greedy(g, c),
    }
}

fn carleson_bruteforce(g: &CubeGeometry, c: &CubeSequence) -> Result<CarlesonEstimate> {
    let n = c.len();
    if n > BRUTE_MAX {
        return Err(Error::Precondition(format!("bruteforce Carleson needs at most {BRUTE_MAX} cubes, got {n}")));
    }
    if n == 0 {
        return Ok(CarlesonEstimate { lower: 0.0, upper: 0.0, witness: vec![] });
    }
    let cubes = c.cubes();
    let w = carleson_weights(g, c);
    let cells = g.cells(&cubes)?;
    let (val, mask) = (1u64..1 << n)
        .into_par_iter()
        .map(|s| {
            let num: f64 = (0..n).filter(|t| s >> t & 1 == 1).map(|t| w[t]).sum();
            let den: f64 = cells.iter().filter(|(m, _)| m & s != 0).map(|(_, a)| a).sum();
            (num / den, s)
        })
        .reduce(|| (0.0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let witness = (0..n).filter(|t| mask >> t & 1 == 1).map(|t| cubes[t].clone()).collect();
    Ok(CarlesonEstimate { lower: val, upper: val, witness })
}

/// Scale-descending layers: take the top-scale cubes, drop everything in their tents, repeat.
/// The layers are disjoint and their tents cover the support, so
/// C ≤ max_D m(D)^{−1} Σ_{E ∈ 𝒯(D) ∩ supp} |c_E| m(E)^{1/2}; tested subcollections give the lower side.
fn carleson_greedy(g: &CubeGeometry, c: &CubeSequence) -> Result<CarlesonEstimate> {
    let cubes = c.cubes();
    let w = carleson_weights(g, c);
    let n = cubes.len();
    if n == 0 {
        return Ok(CarlesonEstimate { lower: 0.0, upper: 0.0, witness: vec![] });
    }
    // in_tent[a] lists b with cube b ∈ 𝒯(cube a)
    let in_tent: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|a| -> Result<Vec<usize>> {
            let mut v = vec![];
            for b in 0..n {
                if cubes[b].i <= cubes[a].i && g.overlaps(&cubes[a], &cubes[b])? {
                    v.push(b);
                }
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let tent_sum = |a: usize| in_tent[a].iter().map(|&b| w[b]).sum::<f64>();
    let upper = (0..n).map(|a| tent_sum(a) / g.measure(&cubes[a])).fold(0.0, f64::max);
    let mut left: Vec<usize> = (0..n).collect();
    let mut layers = vec![];
    while let Some(top) = left.iter().map(|&t| cubes[t].i).max() {
        let sel: Vec<usize> = left.iter().copied().filter(|&t| cubes[t].i == top).collect();
        left.retain(|t| !sel.iter().any(|&a| in_tent[a].contains(t)));
        layers.extend(sel);
    }
    let ratio = |set: &[usize]| -> Result<f64> {
        let sub: Vec<DilatedCube> = set.iter().map(|&t| cubes[t].clone()).collect();
        Ok(set.iter().map(|&t| w[t]).sum::<f64>() / g.union_measure(&sub)?)
    };
    let all: Vec<usize> = (0..n).collect();
    let mut lower = ratio(&all)?;
    for a in 0..n {
        lower = lower.max(w[a] / g.measure(&cubes[a]));
    }
    for &a in &layers {
        lower = lower.max(ratio(&in_tent[a])?);
    }
    Ok(CarlesonEstimate { lower, upper, witness: layers.into_iter().map(|t| cubes[t].clone()).collect() })
}

/// Single-scale sequence with `size` cubes: a uniform point in [0, extent]^d and a uniform scale pick the cube.
pub fn random_sequence<R: Rng>(g: &CubeGeometry, r: &mut R, size: usize, scales: (i64, i64), extent: f64) -> Result<CubeSequence> {
    let d = g.dim();
    let mut out = CubeSequence::new();
    let mut tries = 0;
    while out.len() < size {
        tries += 1;
        if tries > 100 * size + 100 {
            return Err(Error::Param("cannot draw distinct cubes in the window".into()));
        }
        let i = r.random_range(scales.0..=scales.1);
        let x: Vec<f64> = (0..d).map(|_| extent * r.random::<f64>()).collect();
        let inv = g.power(-i)?;
        let k = (0..d).map(|a| (0..d).map(|b| inv[(a, b)] * x[b]).sum::<f64>().floor() as i64).collect();
        let cube = DilatedCube::new(i, k);
        if out.get(&cube) == Complex64::new(0.0, 0.0) {
            out.insert(cube, Complex64::new(sampling::normal(r), sampling::normal(r)));
        }
    }
    Ok(out)
}

/// Pairing report for one pair: |⟨c, c′⟩| against ‖c‖_{ḟ⁰_{1,∞}}‖c′‖_{ḟ⁰_{∞,1}}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingCheck {
    pub pairing: f64,
    pub f1inf: f64,
    pub finf1: f64,
    pub ratio: f64,
    /// ‖c‖_{ḟ⁰_{1,∞}} times the best Carleson constant of |c′_D| m(D)^{1/2}, when c′ is small enough to enumerate
    pub carleson_bound: Option<f64>,
    pub verdict: Outcome,
}

pub fn pairing_bound_check(g: &CubeGeometry, c: &CubeSequence, cp: &CubeSequence, margin: i64, bound: f64) -> Result<PairingCheck> {
    let lhs = pairing(c, cp).norm();
    let f1 = f1inf_norm(g, c)?;
    let fi = finf1_norm_def(g, cp, margin)?;
    let prod = f1 * fi;
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / prod };
    let carleson_bound = if cp.len() <= BRUTE_MAX { Some(f1 * carleson_bruteforce(g, cp)?.upper) } else { None };
    let ok = ratio <= bound && carleson_bound.is_none_or(|b| lhs <= b * (1.0 + 1e-9));
    Ok(PairingCheck { pairing: lhs, f1inf: f1, finf1: fi, ratio, carleson_bound, verdict: Outcome::from_bool(ok) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CubeBatteryConfig {
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub sequences: usize,
    pub max_cubes: usize,
    pub scales: (i64, i64),
    pub extent: f64,
    pub margin: i64,
    pub bound: f64,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for CubeBatteryConfig {
    fn default() -> Self {
        Self {
            matrices: vec![vec![vec![2.0, 0.0], vec![0.0, 2.0]], vec![vec![2.0, 0.0], vec![0.0, 4.0]], vec![vec![2.0, 1.0], vec![0.0, 2.0]]],
            sequences: 1000,
            max_cubes: 12,
            scales: (-2, 2),
            extent: 4.0,
            margin: 2,
            bound: 20.0,
            pairs: 1000,
            seed: 29,
        }
    }
}

fn mutual(vals: &[f64]) -> f64 {
    let hi = vals.iter().copied().fold(0.0, f64::max);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

/// Bruteforce Carleson constant, definition and tent forms on random sequences; exact single-cube
/// values; greedy brackets; tent containment; the margin widening study; pairings at two support sizes.
pub fn cube_battery(cfg: &CubeBatteryConfig) -> Result<Report> {
    let mut seqs = Table::new("sequences", &["matrix", "seq", "size", "carleson", "def", "tent", "greedy_lower", "greedy_upper", "def_wide"]);
    let mut consts = Table::new("constants", &["matrix", "tent_over_def", "carleson_over_def", "carleson_over_tent", "mutual"]);
    let mut single = Table::new("single", &["matrix", "i", "measure", "f1inf", "def", "tent", "carleson", "max_error"]);
    let mut tents = Table::new("containment", &["matrix", "radius", "measured", "cubes"]);
    let mut pairs = Table::new("pairing", &["matrix", "size", "max_ratio", "max_carleson_ratio"]);
    let mut ok = true;
    for (mi, rows) in cfg.matrices.iter().enumerate() {
        let a = ExpansiveMatrix::from_rows(rows)?;
        let g = CubeGeometry::new(&a)?;
        let d = g.dim();
        let rows_m: Vec<Vec<f64>> = (0..cfg.sequences)
            .into_par_iter()
            .map(|k| -> Result<Vec<f64>> {
                let mut r = sampling::rng(cfg.seed, (mi * cfg.sequences + k) as u64);
                let size = r.random_range(1..=cfg.max_cubes);
                let c = random_sequence(&g, &mut r, size, cfg.scales, cfg.extent)?;
                let b = carleson_bruteforce(&g, &c)?.upper;
                let gr = carleson_greedy(&g, &c)?;
                let def = finf1_norm_def(&g, &c, cfg.margin)?;
                let tent = finf1_norm_tent(&g, &c, cfg.margin)?;
                let wide = finf1_norm_def(&g, &c, cfg.margin + 2)?;
                Ok(vec![mi as f64, k as f64, size as f64, b, def, tent, gr.lower, gr.upper, wide])
            })
            .collect::<Result<_>>()?;
        let mut worst = [1.0f64; 4];
        for row in &rows_m {
            let (b, def, tent, lo, hi, wide) = (row[3], row[4], row[5], row[6], row[7], row[8]);
            ok &= lo <= b * (1.0 + 1e-9) && b <= hi * (1.0 + 1e-9);
            ok &= ((wide - def) / def).abs() <= 1e-12;
            worst[0] = worst[0].max(tent / def);
            worst[1] = worst[1].max(mutual(&[b, def]));
            worst[2] = worst[2].max(mutual(&[b, tent]));
            worst[3] = worst[3].max(mutual(&[b, def, tent]));
        }
        ok &= worst[3] < cfg.bound;
        consts.push(vec![mi as f64, worst[0], worst[1], worst[2], worst[3]]);
        seqs.rows.extend(rows_m);

        for i in -3..=3i64 {
            let cube = DilatedCube::new(i, vec![1; d]);
            let m = g.measure(&cube);
            let c = CubeSequence::single(cube, Complex64::new(1.0, 0.0));
            let f1 = f1inf_norm(&g, &c)?;
            let def = finf1_norm_def(&g, &c, cfg.margin)?;
            let tent = finf1_norm_tent(&g, &c, cfg.margin)?;
            let b = carleson_bruteforce(&g, &c)?.upper;
            let target = m.powf(-0.5);
            let err = [f1 / m.sqrt() - 1.0, def / target - 1.0, tent / target - 1.0, b / target - 1.0].iter().map(|e| e.abs()).fold(0.0, f64::max);
            ok &= err <= 1e-10;
            single.push(vec![mi as f64, i as f64, m, f1, def, tent, b, err]);
        }

        let radius = g.tent_radius();
        let mut measured = 0;
        let mut count = 0;
        let mut r = sampling::rng(cfg.seed, 1_000_000 + mi as u64);
        for _ in 0..50 {
            let c = random_sequence(&g, &mut r, 1, cfg.scales, cfg.extent)?;
            let cube = c.cubes().remove(0);
            let t = g.tent(&cube, cube.i - 3)?;
            measured = measured.max(g.containment_radius(&cube, &t)?);
            count += 1;
        }
        ok &= measured <= radius;
        tents.push(vec![mi as f64, radius as f64, measured as f64, count as f64]);

        let mut maxima = vec![];
        for size in [cfg.max_cubes / 2, cfg.max_cubes] {
            let res: Vec<PairingCheck> = (0..cfg.pairs)
                .into_par_iter()
                .map(|k| -> Result<PairingCheck> {
                    let mut r = sampling::rng(cfg.seed ^ 0x9a1, (mi * 1_000_003 + size * 10_007 + k) as u64);
                    let c = random_sequence(&g, &mut r, size, cfg.scales, cfg.extent)?;
                    let mut cp = random_sequence(&g, &mut r, size, cfg.scales, cfg.extent)?;
                    // share half of the support so the pairing is not trivially zero
                    for (t, (cube, _)) in c.iter().enumerate() {
                        if t % 2 == 0 {
                            cp.insert(cube.clone(), Complex64::new(sampling::normal(&mut r), sampling::normal(&mut r)));
                        }
                    }
                    let cp = trim(cp, BRUTE_MAX);
                    pairing_bound_check(&g, &c, &cp, cfg.margin, cfg.bound)
                })
                .collect::<Result<_>>()?;
            ok &= res.iter().all(|p| p.verdict.passed());
            let max_ratio = res.iter().map(|p| p.ratio).fold(0.0, f64::max);
            let max_c = res.iter().filter_map(|p| p.carleson_bound.map(|b| if b > 0.0 { p.pairing / b } else { 0.0 })).fold(0.0, f64::max);
            pairs.push(vec![mi as f64, size as f64, max_ratio, max_c]);
            maxima.push(max_ratio);
        }
        // doubling the support must not push the worst ratio up
        ok &= maxima[1] <= 1.25 * maxima[0];
    }
    let mut rep = Report::new(
        "cubes",
        json!({"matrices": cfg.matrices, "sequences": cfg.sequences, "max_cubes": cfg.max_cubes, "scales": [cfg.scales.0, cfg.scales.1], "extent": cfg.extent, "margin": cfg.margin, "bound": cfg.bound, "pairs": cfg.pairs}),
    );
    rep.seeds = vec![cfg.seed];
    rep.tables = vec![seqs, consts, single, tents, pairs];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

/// Drops the largest-key entries beyond `n`.
fn trim(c: CubeSequence, n: usize) -> CubeSequence {
    let mut out = CubeSequence::new();
    for (d, v) in c.iter().take(n) {
        out.insert(d.clone(), *v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(rows: &[Vec<f64>]) -> CubeGeometry {
        CubeGeometry::new(&ExpansiveMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn clip_square() {
        let sq = vec![[0.5, 0.5], [1.5, 0.5], [1.5, 1.5], [0.5, 1.5]];
        assert!((clip_unit_square(sq) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn slab_union_of_rotated_squares() {
        let g = geo(&[vec![0.0, -2.0], vec![2.0, 0.0]]);
        let cubes = vec![DilatedCube::new(1, vec![0, 0]), DilatedCube::new(0, vec![0, 0])];
        // A[0,1]² = [−2,0]×[0,2] and [0,1]² share only an edge
        assert!((g.union_measure(&cubes).unwrap() - 5.0).abs() < 1e-12);
        assert!(!g.overlaps(&cubes[0], &cubes[1]).unwrap());
    }
}
