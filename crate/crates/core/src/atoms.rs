//! Modulated bump atoms and their placement inside cover cells.

use nalgebra::DVector;
use rayon::prelude::*;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::covers::{neighbor_bound, smooth_step, CoverPair, FourierProfile, FrequencyGrid};
use crate::error::{Error, Result};
use crate::field::{BandCertificate, SampledField};
use crate::linalg::{unit_ball_volume, ExpansiveMatrix, ScaledMatrix};

/// φ̂ on the radius: smooth, 1 on B_{1/2}, 0 outside B_1.
pub fn bump_hat(r: f64) -> f64 {
    smooth_step(2.0 - 2.0 * r)
}

/// φ(0) = ∫ φ̂, by radial Simpson quadrature.
pub fn bump_at_origin(d: usize) -> f64 {
    let m = 4000;
    let h = 1.0 / m as f64;
    let sphere = d as f64 * unit_ball_volume(d);
    let f = |r: f64| bump_hat(r) * r.powi(d as i32 - 1);
    let mut s = f(0.0) + f(1.0);
    for k in 1..m {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    sphere * s * h / 3.0
}

/// A radius r with |φ(x)| ≥ φ(0)/2 on B_r: |φ(x) − φ(0)| ≤ 2π|x| φ(0) since supp φ̂ ⊆ B_1 and φ̂ ≥ 0.
pub const HALF_VALUE_RADIUS: f64 = 1.0 / (4.0 * std::f64::consts::PI);

/// c · M_η φ_δ, with φ̂_δ = φ̂(·/δ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpAtom {
    pub delta: f64,
    pub eta: Vec<f64>,
    pub coeff: (f64, f64),
}

impl BumpAtom {
    pub fn new(delta: f64, eta: Vec<f64>, coeff: Complex64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Param(format!("atom width {delta} must be positive")));
        }
        Ok(Self { delta, eta, coeff: (coeff.re, coeff.im) })
    }

    pub fn coeff(&self) -> Complex64 {
        Complex64::new(self.coeff.0, self.coeff.1)
    }

    /// Envelope spectrum at ζ = ξ − η.
    pub fn hat(&self, zeta: &[f64]) -> Complex64 {
        let r = zeta.iter().map(|z| z * z).sum::<f64>().sqrt() / self.delta;
        self.coeff() * bump_hat(r)
    }

    pub fn certificate(&self) -> BandCertificate {
        BandCertificate::Ball { center: self.eta.clone(), radius: self.delta }
    }

    pub fn add_to(&self, f: &mut SampledField) {
        f.add_band_fn(&self.eta, |z| self.hat(z));
    }
}

/// Grid for atoms of width δ: spatial box X = extent/δ with n points per axis.
pub fn atom_grid(d: usize, delta: f64, extent: f64, n: usize) -> Result<FrequencyGrid> {
    let x = extent / delta;
    let g = FrequencyGrid::new(d, n as f64 / (4.0 * x), n)?;
    if g.half_width < 1.05 * delta {
        return Err(Error::Grid(format!("{n} points cannot resolve δ = {delta} on [−{x}, {x}]")));
    }
    Ok(g)
}

/// Field Σ c_k M_{η_k} φ_δ on `grid`.
pub fn atoms_field(grid: FrequencyGrid, atoms: &[BumpAtom]) -> SampledField {
    let mut f = SampledField::zero(grid);
    for a in atoms {
        a.add_to(&mut f);
    }
    f.certificate = Some(BandCertificate::Balls(atoms.iter().map(|a| (a.eta.clone(), a.delta)).collect()));
    f
}

/// ξ ↦ Ln (A*)^{-i} ξ in scaled form with its largest singular value.
#[derive(Clone, Debug)]
struct CellMap {
    m: ScaledMatrix,
    smax: f64,
}

impl CellMap {
    fn new(prof: &FourierProfile, i: i64) -> Self {
        let dual = prof.dual();
        let m = dual.powers().power(-i).lmul_plain(dual.ellipsoid.factor());
        let smax = m.ln_norm().exp();
        Self { m, smax }
    }

    fn radius(&self, xi: &DVector<f64>) -> f64 {
        (&self.m.mant * xi).norm() * self.m.log_scale.exp()
    }
}

/// A cell (A*)^i Q, or its core where every other dilate vanishes (so φ̂_i ≡ 1 there).
#[derive(Clone, Debug)]
pub struct Target {
    lo: f64,
    hi: f64,
    cell: CellMap,
    /// maps of the neighbouring cells i + m, 0 < |m| ≤ N, when the core is wanted
    others: Vec<CellMap>,
    base: (FourierProfile, i64),
}

impl Target {
    pub fn cell(prof: &FourierProfile, i: i64) -> Self {
        let (lo, hi) = prof.support();
        Self { lo, hi, cell: CellMap::new(prof, i), others: vec![], base: (prof.clone(), i) }
    }

    pub fn core(prof: &FourierProfile, i: i64, n: i64) -> Self {
        let mut t = Self::cell(prof, i);
        t.others = (-n..=n).filter(|&m| m != 0).map(|m| CellMap::new(prof, i + m)).collect();
        t
    }

    pub fn is_core(&self) -> bool {
        !self.others.is_empty()
    }

    /// Euclidean radius of a ball around ξ guaranteed inside the target.
    pub fn inradius(&self, xi: &[f64]) -> f64 {
        self.signed(xi).max(0.0)
    }

    /// Like `inradius`, negative outside (a bound on how far the point must move).
    fn signed(&self, xi: &[f64]) -> f64 {
        let x = DVector::from_row_slice(xi);
        let t = self.cell.radius(&x);
        let mut r = (t - self.lo).min(self.hi - t) / self.cell.smax;
        for o in &self.others {
            let u = o.radius(&x);
            r = r.min((self.lo - u).max(u - self.hi) / o.smax);
        }
        r
    }

    /// A point of the cell from coordinates y in the base annulus.
    fn point(&self, y: &[f64]) -> Vec<f64> {
        let (prof, i) = &self.base;
        let dual = prof.dual();
        let t = dual.powers().power(*i).rmul_plain(dual.ellipsoid.factor_inv());
        let v = &t.mant * DVector::from_row_slice(y) * t.log_scale.exp();
        v.iter().copied().collect()
    }
}

/// Euclidean radius of a ball around ξ guaranteed inside (A*)^i Q.
pub fn cell_inradius(prof: &FourierProfile, i: i64, xi: &[f64]) -> f64 {
    Target::cell(prof, i).inradius(xi)
}

fn sphere_points(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci sphere
            let g = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    vec![r * (g * k as f64).cos(), r * (g * k as f64).sin(), z]
                })
                .collect()
        }
    }
}

/// A point η and radius δ with B_δ(η) inside every target, δ maximal up to search accuracy.
pub fn plant_in(targets: &[Target]) -> Option<(Vec<f64>, f64)> {
    let objective = |xi: &[f64]| targets.iter().map(|t| t.signed(xi)).fold(f64::INFINITY, f64::min);
    let d = targets[0].cell.m.mant.nrows();
    let dirs = sphere_points(d, if d == 2 { 720 } else { 2000 });
    // coarse scan in each target's own coordinates, then local refinement of the best few
    let mut starts: Vec<(f64, usize, Vec<f64>)> = vec![];
    for (c, t) in targets.iter().enumerate() {
        let mut scan: Vec<(f64, Vec<f64>)> = (1..24)
            .into_par_iter()
            .flat_map_iter(|k| {
                let r = t.lo + (t.hi - t.lo) * k as f64 / 24.0;
                dirs.iter().map(move |u| u.iter().map(|v| v * r).collect::<Vec<f64>>())
            })
            .map(|y| (objective(&t.point(&y)), y))
            .collect();
        scan.sort_by(|x, y| y.0.total_cmp(&x.0));
        starts.extend(scan.into_iter().take(4).map(|(v, y)| (v, c, y)));
    }
    let refined = starts.into_par_iter().map(|(v, c, y)| refine(&targets[c], &objective, v, y)).max_by(|x, y| x.1.total_cmp(&y.1))?;
    (refined.1 > 0.0).then_some(refined)
}

fn refine(t: &Target, objective: &(impl Fn(&[f64]) -> f64 + Sync), mut val: f64, mut y: Vec<f64>) -> (Vec<f64>, f64) {
    let mut step = 0.05 * (t.hi - t.lo);
    let floor = 1e-22 * t.hi;
    let mut evals = 0;
    while step > floor && evals < 4000 {
        let mut moved = false;
        for a in 0..y.len() {
            for s in [-1.0, 1.0] {
                let mut z = y.clone();
                z[a] += s * step;
                let v = objective(&t.point(&z));
                evals += 1;
                if v > val {
                    val = v;
                    y = z;
                    moved = true;
                }
            }
        }
        if moved {
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    (t.point(&y), val)
}

/// Largest δ with δ A^{−i} Ω inside the half-value ball of φ.
pub fn half_value_delta(a: &ExpansiveMatrix, i: i64) -> Result<f64> {
    let dil = crate::linalg::Dilation::new(a.clone(), None)?;
    let t = dil.powers().power(-i).rmul_plain(dil.ellipsoid.factor_inv());
    Ok(HALF_VALUE_RADIUS / t.ln_norm().exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantMode {
    /// all atoms in one B-cell, spread over A-scales
    Separated,
    /// both A- and B-indices increasing
    Spread,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomTrain {
    pub atoms: Vec<BumpAtom>,
    pub i_k: Vec<i64>,
    /// B-cell indices, one per atom (all equal in separated mode)
    pub j_k: Vec<i64>,
    /// joint neighbour bound N
    pub n: i64,
    pub residue: Option<i64>,
    /// largest admissible width; atoms carry δ₀/2
    pub delta0: f64,
    /// whether the atoms sit in the cores (A side, B side)
    #[serde(default)]
    pub cores: (bool, bool),
}

impl AtomTrain {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The first k atoms, with new coefficients.
    pub fn sub_train(&self, k: usize, coeffs: &[Complex64]) -> AtomTrain {
        let mut t = self.clone();
        t.atoms.truncate(k);
        t.i_k.truncate(k);
        t.j_k.truncate(k);
        for (a, c) in t.atoms.iter_mut().zip(coeffs) {
            a.coeff = (c.re, c.im);
        }
        t
    }

    pub fn delta(&self) -> f64 {
        self.atoms.first().map_or(0.0, |a| a.delta)
    }

    /// Re-checks gaps, cell containment and the half-value condition.
    pub fn verify(&self, qa: &FourierProfile, pb: Option<&FourierProfile>, a: &ExpansiveMatrix) -> Result<()> {
        for w in self.i_k.windows(2) {
            if w[1] - w[0] < 2 * self.n + 1 {
                return Err(Error::Plant(format!("scale gap {} < 2N+1", w[1] - w[0])));
            }
        }
        for (k, at) in self.atoms.iter().enumerate() {
            if cell_inradius(qa, self.i_k[k], &at.eta) < at.delta {
                return Err(Error::Plant(format!("atom {k} leaves its A-cell")));
            }
            if let Some(pb) = pb {
                if cell_inradius(pb, self.j_k[k], &at.eta) < at.delta {
                    return Err(Error::Plant(format!("atom {k} leaves its B-cell")));
                }
            }
        }
        if let Some(&i1) = self.i_k.first() {
            if self.delta() > half_value_delta(a, i1)? {
                return Err(Error::Plant("half-value condition fails".into()));
            }
        }
        Ok(())
    }
}

type Cell = (i64, i64, Vec<f64>, f64);

fn finish(cells: Vec<Cell>, n: i64, residue: Option<i64>, a: &ExpansiveMatrix) -> Result<AtomTrain> {
    let i1 = cells[0].0;
    let d1 = cells.iter().map(|c| c.3).fold(f64::INFINITY, f64::min);
    let delta0 = d1.min(half_value_delta(a, i1)?);
    let delta = 0.5 * delta0;
    let atoms = cells.iter().map(|c| BumpAtom::new(delta, c.2.clone(), Complex64::new(1.0, 0.0))).collect::<Result<_>>()?;
    Ok(AtomTrain {
        atoms,
        i_k: cells.iter().map(|c| c.0).collect(),
        j_k: cells.iter().map(|c| c.1).collect(),
        n,
        residue,
        delta0,
        cores: (false, false),
    })
}

/// Atoms at the given A-scales (no second cover), common width from the smallest cell.
pub fn plant_scales(a: &ExpansiveMatrix, qa: &FourierProfile, scales: &[i64]) -> Result<AtomTrain> {
    let n = neighbor_bound(qa)?;
    let mut sorted = scales.to_vec();
    sorted.sort_unstable();
    let cells = sorted
        .iter()
        .map(|&i| {
            let (eta, r) = plant_in(&[Target::cell(qa, i)]).ok_or_else(|| Error::Plant(format!("empty cell at i = {i}")))?;
            Ok((i, i, eta, r))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(cells, n, None, a)
}

/// Order 0, 1, −1, 2, −2, … up to ±range.
fn sweep(range: i64) -> impl Iterator<Item = i64> {
    (0..=2 * range).map(|k| if k % 2 == 1 { (k + 1) / 2 } else { -(k / 2) })
}

/// Core/cell preference tiers, tried in order.
const TIERS: [(bool, bool); 3] = [(true, true), (true, false), (false, false)];
/// B-cells examined per tier once one is large enough.
const CELLS_PER_TIER: usize = 6;

fn targets(qa: &FourierProfile, pb: &FourierProfile, i: i64, j: i64, n: (i64, i64), tier: (bool, bool)) -> [Target; 2] {
    let ta = if tier.0 { Target::core(qa, i, n.0) } else { Target::cell(qa, i) };
    let tb = if tier.1 { Target::core(pb, j, n.1) } else { Target::cell(pb, j) };
    [ta, tb]
}

/// Trains for A against B. `Separated` puts every atom in one (B*)^{j₀}P cell with A-scales in one
/// residue class mod 2N+1; `Spread` lets both index sequences increase. Atoms go into cell cores
/// when those meet, otherwise anywhere in the cells.
pub fn plant_atoms(a: &ExpansiveMatrix, qa: &FourierProfile, pb: &FourierProfile, k: usize, mode: PlantMode, range: i64) -> Result<AtomTrain> {
    if k == 0 {
        return Err(Error::Param("empty train".into()));
    }
    let (na, nb) = (neighbor_bound(qa)?, neighbor_bound(pb)?);
    let n = na.max(nb);
    let gap = 2 * n + 1;
    let cp = CoverPair::new(qa, pb)?;
    let mut found: Option<(Vec<Cell>, Option<i64>, (bool, bool))> = None;
    match mode {
        PlantMode::Separated => {
            let need = gap * k as i64;
            let big: Vec<(i64, (i64, i64))> =
                sweep(range).filter_map(|j| cp.i_interval(j).filter(|(x, y)| y - x + 1 >= need).map(|v| (j, v))).take(CELLS_PER_TIER).collect();
            if big.is_empty() {
                return Err(Error::Plant(format!("no B-cell meets {need} A-cells within ±{range}")));
            }
            'tiers: for tier in TIERS {
                for &(j0, (lo, hi)) in &big {
                    let mut classes: Vec<i64> = (0..gap).collect();
                    classes.sort_by_key(|&r| (std::cmp::Reverse((lo..=hi).filter(|i| i.rem_euclid(gap) == r).count()), r));
                    for r0 in classes {
                        let cand: Vec<i64> = (lo..=hi).filter(|i| i.rem_euclid(gap) == r0).collect();
                        if cand.len() < k {
                            continue;
                        }
                        let planted: Vec<Option<Cell>> = cand
                            .par_iter()
                            .map(|&i| plant_in(&targets(qa, pb, i, j0, (na, nb), tier)).map(|(eta, r)| (i, j0, eta, r)))
                            .collect();
                        let ok: Vec<Cell> = planted.into_iter().flatten().collect();
                        if ok.len() >= k {
                            // keep a contiguous run of the class when possible
                            let start = (0..=ok.len() - k).find(|&s| ok[s + k - 1].0 - ok[s].0 == gap * (k as i64 - 1)).unwrap_or(0);
                            found = Some((ok[start..start + k].to_vec(), Some(r0), tier));
                            break 'tiers;
                        }
                    }
                }
            }
        }
        PlantMode::Spread => {
            'spread: for tier in TIERS {
                let mut cells = vec![];
                let mut j = cp.j_interval(0).map(|v| v.0).unwrap_or(0);
                let mut i_next = i64::MIN;
                let mut tries = 0;
                while cells.len() < k {
                    tries += 1;
                    if tries > 4 * range.max(1) {
                        continue 'spread;
                    }
                    if let Some((x, y)) = cp.i_interval(j) {
                        let hit = (x.max(i_next)..=y).find_map(|i| plant_in(&targets(qa, pb, i, j, (na, nb), tier)).map(|(eta, r)| (i, j, eta, r)));
                        if let Some(c) = hit {
                            i_next = c.0 + gap;
                            cells.push(c);
                            j += gap;
                            continue;
                        }
                    }
                    j += 1;
                }
                found = Some((cells, None, tier));
                break;
            }
        }
    }
    let (cells, residue, tier) = found.ok_or_else(|| Error::Plant("no admissible atoms in the examined cells".into()))?;
    let mut t = finish(cells, n, residue, a)?;
    t.cores = tier;
    t.verify(qa, Some(pb), a)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covers::BumpShape;
    use crate::field::lp_norm;
    use crate::field::Quadrature;

    #[test]
    fn bump_origin_positive_and_scaling() {
        for d in 1..=3 {
            assert!(bump_at_origin(d) > 0.0);
        }
        // ‖φ_δ‖_p = δ^{d(1−1/p)} ‖φ‖_p
        let p = 1.5;
        let norm = |delta: f64| {
            let g = atom_grid(2, delta, 48.0, 256).unwrap();
            let at = BumpAtom::new(delta, vec![0.0, 0.0], Complex64::new(1.0, 0.0)).unwrap();
            lp_norm(&atoms_field(g, &[at]), p, &Quadrature::default())
        };
        let (a, b) = (norm(1.0), norm(0.25));
        assert!((b / a / 0.25f64.powf(2.0 * (1.0 - 1.0 / p)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn planted_atom_sits_in_cell() {
        let a = ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap();
        let q = FourierProfile::new(&a, BumpShape::default()).unwrap();
        let t = plant_scales(&a, &q, &[3]).unwrap();
        assert_eq!(t.j_k, vec![3]);
        let at = &t.atoms[0];
        assert!(cell_inradius(&q, 3, &at.eta) >= at.delta);
        t.verify(&q, None, &a).unwrap();
        // every point of the ball is in the open cell
        for u in sphere_points(2, 64) {
            let x: Vec<f64> = at.eta.iter().zip(&u).map(|(e, v)| e + 0.999 * at.delta * v).collect();
            assert!(q.dilate(3).in_support(&x));
        }
    }

    #[test]
    fn separated_train_for_inequivalent_pair() {
        let a = ExpansiveMatrix::scalar(2, 2.0).unwrap();
        let b = ExpansiveMatrix::diag(&[2.0, 4.0]).unwrap();
        let (qa, pb) = (FourierProfile::new(&a, BumpShape::default()).unwrap(), FourierProfile::new(&b, BumpShape::default()).unwrap());
        let t = plant_atoms(&a, &qa, &pb, 4, PlantMode::Separated, 200).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.j_k.iter().all(|&j| j == t.j_k[0]));
        let r = t.residue.unwrap();
        assert_eq!(t.cores, (true, true));
        assert!(t.i_k.iter().all(|i| i.rem_euclid(2 * t.n + 1) == r));
    }
}
