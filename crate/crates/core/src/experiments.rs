//! The atom experiments: norm estimates for single atoms, trains, sign averages and pairs of matrices.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::atoms::{atom_grid, atoms_field, half_value_delta, plant_atoms, plant_in, plant_scales, BumpAtom, PlantMode, Target};
use crate::covers::{BumpShape, CoverPair, FourierProfile};
use crate::equivalence::{decide_equivalence, ls_slope, EquivConfig, EquivalenceVerdict, Verdict};
use crate::error::Result;
use crate::field::{lp_norm, Quadrature, SampledField};
use crate::linalg::ExpansiveMatrix;
use crate::report::{spread, Outcome, Report, Table};
use crate::sampling;
use crate::tl_norm::{norm, peetre_maximal, pieces, Analyzer, TlParams};
use statrs::function::gamma::gamma;

/// Atom grids: n points per axis on [−extent/δ, extent/δ]^d.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub n: usize,
    pub extent: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n: 256, extent: 48.0 }
    }
}

fn inf_to_json(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

fn params_json(ps: &[TlParams]) -> serde_json::Value {
    ps.iter().map(|p| json!({"alpha": p.alpha, "p": inf_to_json(p.p), "q": inf_to_json(p.q)})).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SingleAtomConfig {
    pub params: Vec<TlParams>,
    pub i0: (i64, i64),
    pub grid: GridSpec,
    /// width multipliers applied to the planted δ
    pub widths: Vec<f64>,
    pub bound: f64,
}

impl Default for SingleAtomConfig {
    fn default() -> Self {
        Self {
            params: vec![TlParams::new(0.0, 2.0, 2.0), TlParams::new(1.0, 2.0, 2.0), TlParams::new(0.0, 1.0, f64::INFINITY), TlParams::new(0.0, f64::INFINITY, f64::INFINITY), TlParams::new(1.0, f64::INFINITY, 2.0)],
            i0: (-4, 4),
            grid: GridSpec::default(),
            widths: vec![1.0],
            bound: 10.0,
        }
    }
}

/// tl_norm / (|det A|^{α i₀} ‖f‖_{L^p}) for single atoms planted in (A*)^{i₀}Q.
pub fn single_atom(a: &ExpansiveMatrix, shape: BumpShape, cfg: &SingleAtomConfig) -> Result<Report> {
    let an = Analyzer::new(a, shape)?;
    let d = a.dim();
    let quad = Quadrature::default();
    let cells: Vec<i64> = (cfg.i0.0..=cfg.i0.1).collect();
    let mut rows: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&i0| -> Result<Vec<Vec<f64>>> {
            let t = plant_scales(a, an.profile(), &[i0])?;
            let mut out = vec![];
            for &w in &cfg.widths {
                let at = BumpAtom::new(t.delta() * w, t.atoms[0].eta.clone(), Complex64::new(1.0, 0.0))?;
                let f = atoms_field(atom_grid(d, at.delta, cfg.grid.extent, cfg.grid.n)?, std::slice::from_ref(&at));
                for prm in &cfg.params {
                    let v = norm(&f, &an, prm, &quad)?;
                    let lp = lp_norm(&f, prm.p, &quad);
                    let r = v / ((prm.alpha * i0 as f64 * a.ln_det()).exp() * lp);
                    out.push(vec![prm.alpha, prm.p, prm.q, i0 as f64, at.delta, r]);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let mut ratios = Table::new("ratios", &["alpha", "p", "q", "i0", "delta", "ratio"]);
    ratios.rows = rows;
    let mut summary = Table::new("summary", &["alpha", "p", "q", "min", "max", "spread"]);
    let mut ok = true;
    for prm in &cfg.params {
        let r: Vec<f64> = ratios.rows.iter().filter(|x| x[0] == prm.alpha && x[1] == prm.p && x[2] == prm.q).map(|x| x[5]).collect();
        let s = spread(&r);
        ok &= s < cfg.bound;
        summary.push(vec![prm.alpha, prm.p, prm.q, r.iter().copied().fold(f64::INFINITY, f64::min), r.iter().copied().fold(0.0, f64::max), s]);
    }
    let mut rep = Report::new("single_atom", json!({"matrix": a.rows(), "params": params_json(&cfg.params), "i0": [cfg.i0.0, cfg.i0.1], "widths": cfg.widths, "bound": cfg.bound}));
    rep.grid = json!({"n": cfg.grid.n, "extent": cfg.grid.extent});
    rep.tables = vec![ratios, summary];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

/// Profile for the dual of `a`.
pub fn profile(a: &ExpansiveMatrix, shape: BumpShape) -> Result<FourierProfile> {
    FourierProfile::new(a, shape)
}

fn draw_coeffs(seed: u64, stream: u64, k: usize) -> Vec<Complex64> {
    let mut r = sampling::rng(seed, stream);
    (0..k).map(|_| Complex64::new(sampling::normal(&mut r), sampling::normal(&mut r))).collect()
}

fn lq(v: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        v.iter().copied().fold(0.0, f64::max)
    } else {
        // log-safe: factor out the maximum
        let m = v.iter().copied().fold(0.0, f64::max);
        if m == 0.0 {
            return 0.0;
        }
        m * v.iter().map(|x| (x / m).powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtomTrainConfig {
    pub alpha: f64,
    pub p: f64,
    pub qs: Vec<f64>,
    pub ks: Vec<usize>,
    /// random coefficient draws per K (a unit draw is always added)
    pub draws: usize,
    pub first_scale: i64,
    pub seed: u64,
    pub grid: GridSpec,
    pub bound: f64,
}

impl Default for AtomTrainConfig {
    fn default() -> Self {
        Self { alpha: 0.0, p: 2.0, qs: vec![1.0, 2.0, f64::INFINITY], ks: vec![2, 4, 8], draws: 3, first_scale: 0, seed: 7, grid: GridSpec::default(), bound: 10.0 }
    }
}

/// ‖Σ c_k M_{η_k} φ_δ‖ against δ^{d(1−1/p)} ‖(|det A|^{α i_k}|c_k|)‖_{ℓ^q}.
pub fn atom_train(a: &ExpansiveMatrix, shape: BumpShape, cfg: &AtomTrainConfig) -> Result<Report> {
    let an = Analyzer::new(a, shape)?;
    let d = a.dim();
    let kmax = cfg.ks.iter().copied().max().unwrap_or(1);
    let n = crate::covers::neighbor_bound(an.profile())?;
    let scales: Vec<i64> = (0..kmax as i64).map(|k| cfg.first_scale + (2 * n + 1) * k).collect();
    let train = plant_scales(a, an.profile(), &scales)?;
    train.verify(an.profile(), None, a)?;
    let delta = train.delta();
    let grid = atom_grid(d, delta, cfg.grid.extent, cfg.grid.n)?;
    let quad = Quadrature::default();
    let mut jobs = vec![];
    for &k in &cfg.ks {
        jobs.push((k, 0usize, vec![Complex64::new(1.0, 0.0); k]));
        for r in 0..cfg.draws {
            jobs.push((k, r + 1, draw_coeffs(cfg.seed, (k * 1000 + r) as u64, k)));
        }
    }
    let mut table = Table::new("ratios", &["K", "draw", "q", "norm", "sequence", "ratio"]);
    let rows: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|(k, draw, c)| -> Result<Vec<Vec<f64>>> {
            let t = train.sub_train(*k, c);
            let f = atoms_field(grid, &t.atoms);
            let w: Vec<f64> = t.i_k.iter().zip(c).map(|(&i, c)| (cfg.alpha * i as f64 * a.ln_det()).exp() * c.norm()).collect();
            cfg.qs
                .iter()
                .map(|&q| {
                    let v = norm(&f, &an, &TlParams::new(cfg.alpha, cfg.p, q), &quad)?;
                    let s = delta.powf(d as f64 * (1.0 - 1.0 / cfg.p)) * lq(&w, q);
                    Ok(vec![*k as f64, *draw as f64, q, v, s, v / s])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    table.rows = rows.into_iter().flatten().collect();
    let mut summary = Table::new("summary", &["q", "spread"]);
    let mut ok = true;
    for &q in &cfg.qs {
        let r: Vec<f64> = table.rows.iter().filter(|x| x[2] == q).map(|x| x[5]).collect();
        let s = spread(&r);
        ok &= s < cfg.bound;
        summary.push(vec![q, s]);
    }
    let mut rep = Report::new(
        "atom_train",
        json!({"matrix": a.rows(), "alpha": cfg.alpha, "p": inf_to_json(cfg.p), "q": cfg.qs.iter().map(|&q| inf_to_json(q)).collect::<Vec<_>>(), "K": cfg.ks, "scales": train.i_k, "delta": delta, "bound": cfg.bound}),
    );
    rep.seeds = vec![cfg.seed];
    rep.grid = json!({"n": cfg.grid.n, "extent": cfg.grid.extent});
    rep.tables = vec![table, summary];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

/// Sharp bounds of E|Σθ_k a_k|^p / ‖a‖₂^p over real a.
pub fn khintchine_bracket(p: f64) -> (f64, f64) {
    let gauss = 2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt();
    if p >= 2.0 {
        (1.0, gauss)
    } else {
        // two-sign extremal below p ≈ 1.8474, Gaussian above
        (gauss.min(2f64.powf(p / 2.0 - 1.0)), 1.0)
    }
}

/// Exhaustive E|Σθa|^p over all sign patterns (θ₁ = +1 by symmetry).
pub fn sign_moment_exact(a: &[f64], p: f64) -> f64 {
    let k = a.len();
    if k == 0 {
        return 0.0;
    }
    let pats = 1u64 << (k - 1);
    let s = sampling::par_sum(pats as usize, |m| {
        let mut t = a[0];
        for (b, &x) in a[1..].iter().enumerate() {
            t += if (m >> b) & 1 == 1 { -x } else { x };
        }
        t.abs().powf(p)
    });
    s / pats as f64
}

/// Monte-Carlo E|Σθa|^p with its standard error.
pub fn sign_moment_mc(a: &[f64], p: f64, trials: usize, seed: u64) -> (f64, f64) {
    let mut r = sampling::rng(seed, 0x6b68);
    let v: Vec<f64> = (0..trials).map(|_| a.iter().map(|x| sampling::sign(&mut r) * x).sum::<f64>().abs().powf(p)).collect();
    let n = trials as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KhintchineConfig {
    pub ps: Vec<f64>,
    pub k_max: usize,
    pub draws: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for KhintchineConfig {
    fn default() -> Self {
        Self { ps: vec![0.5, 1.0, 1.5, 3.0, 4.0], k_max: 12, draws: 4, trials: 20_000, seed: 11 }
    }
}

/// Sign averages for coefficient batteries at every K ≤ k_max.
pub fn khintchine(cfg: &KhintchineConfig) -> Result<Report> {
    if cfg.k_max > 16 {
        return Err(crate::Error::Param("exhaustive path limited to K ≤ 16".into()));
    }
    let mut table = Table::new("ratios", &["p", "K", "draw", "exact", "mc", "se", "lower", "upper"]);
    let mut ok = true;
    for &p in &cfg.ps {
        let (lo, hi) = khintchine_bracket(p);
        for k in 1..=cfg.k_max {
            let mut batt: Vec<Vec<f64>> = vec![vec![1.0; k], (0..k).map(|m| 0.5f64.powi(m as i32)).collect()];
            for r in 0..cfg.draws {
                let mut g = sampling::rng(cfg.seed, (k * 100 + r) as u64);
                batt.push((0..k).map(|_| sampling::normal(&mut g)).collect());
            }
            for (b, a) in batt.iter().enumerate() {
                let l2p = a.iter().map(|x| x * x).sum::<f64>().powf(p / 2.0);
                let ex = sign_moment_exact(a, p) / l2p;
                let (mc, se) = sign_moment_mc(a, p, cfg.trials, cfg.seed ^ ((k * 100 + b) as u64));
                let (mc, se) = (mc / l2p, se / l2p);
                ok &= ex >= lo * (1.0 - 1e-12) && ex <= hi * (1.0 + 1e-12);
                ok &= (mc - ex).abs() <= 3.0 * se + 1e-12 * ex;
                table.push(vec![p, k as f64, b as f64, ex, mc, se, lo, hi]);
            }
        }
    }
    let exact_one = cfg.ps.iter().all(|&p| (sign_moment_exact(&[1.0], p) - 1.0).abs() < 1e-12);
    let exact_two = (sign_moment_exact(&[1.0, 1.0], 4.0) / 4.0 - 2.0).abs() < 1e-12;
    let mut checks = Table::new("exact", &["ratio_single", "ratio_pair_p4"]);
    checks.push(vec![sign_moment_exact(&[1.0], 3.0), sign_moment_exact(&[1.0, 1.0], 4.0) / 4.0]);
    let mut rep = Report::new("khintchine", json!({"p": cfg.ps, "K_max": cfg.k_max, "draws": cfg.draws, "trials": cfg.trials}));
    rep.seeds = vec![cfg.seed];
    rep.tables = vec![table, checks];
    rep.verdict = Outcome::from_bool(ok && exact_one && exact_two);
    Ok(rep)
}

fn require(a: &ExpansiveMatrix, b: &ExpansiveMatrix, depth: i64, want: Verdict) -> Result<EquivalenceVerdict> {
    let v = decide_equivalence(a, b, depth, &EquivConfig::default())?;
    if v.verdict != want {
        return Err(crate::Error::Precondition(format!("pair classified {:?}, experiment needs {:?}", v.verdict, want)));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QDetectionConfig {
    pub p: f64,
    pub qs: Vec<f64>,
    pub ks: Vec<usize>,
    pub signs: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub sweep: i64,
    pub depth: i64,
    pub tol: f64,
    pub agree_tol: f64,
}

impl Default for QDetectionConfig {
    fn default() -> Self {
        Self { p: 2.0, qs: vec![1.0, 2.0, f64::INFINITY], ks: vec![2, 4, 8, 16], signs: 4, seed: 3, grid: GridSpec::default(), sweep: 400, depth: 40, tol: 0.1, agree_tol: 0.05 }
    }
}

/// One train in a single B-cell, spread over A-scales: the A-norm follows ‖c‖_{ℓ^q}, the B-norm ‖c‖_{ℓ²}.
pub fn q_detection(a: &ExpansiveMatrix, b: &ExpansiveMatrix, shape: BumpShape, cfg: &QDetectionConfig) -> Result<Report> {
    require(a, b, cfg.depth, Verdict::Inequivalent)?;
    let an_a = Analyzer::new(a, shape)?;
    let an_b = Analyzer::new(b, shape)?;
    let kmax = cfg.ks.iter().copied().max().unwrap_or(1);
    let mut swapped = false;
    let train = match plant_atoms(a, an_a.profile(), an_b.profile(), kmax, PlantMode::Separated, cfg.sweep) {
        Ok(t) => t,
        Err(_) => {
            swapped = true;
            plant_atoms(b, an_b.profile(), an_a.profile(), kmax, PlantMode::Separated, cfg.sweep)?
        }
    };
    let (sep, cell) = if swapped { (&an_b, &an_a) } else { (&an_a, &an_b) };
    let d = a.dim();
    let delta = train.delta();
    let grid = atom_grid(d, delta, cfg.grid.extent, cfg.grid.n)?;
    let quad = Quadrature::default();
    let mut table = Table::new("norms", &["K", "q", "separated_side", "cell_side"]);
    for &k in &cfg.ks {
        let unit = vec![Complex64::new(1.0, 0.0); k];
        let f = atoms_field(grid, &train.sub_train(k, &unit).atoms);
        // signs never change moduli of single-atom pieces, so the separated side needs one field
        let draws: Vec<Vec<Complex64>> = (0..cfg.signs)
            .map(|s| {
                let mut r = sampling::rng(cfg.seed, (k * 100 + s) as u64);
                (0..k).map(|_| Complex64::new(sampling::sign(&mut r), 0.0)).collect()
            })
            .collect();
        for &q in &cfg.qs {
            let prm = TlParams::new(0.0, cfg.p, q);
            let na = norm(&f, sep, &prm, &quad)?;
            let mut acc = 0.0;
            for c in &draws {
                let g = atoms_field(grid, &train.sub_train(k, c).atoms);
                acc += norm(&g, cell, &prm, &quad)?.powf(cfg.p);
            }
            let nb = (acc / draws.len() as f64).powf(1.0 / cfg.p);
            table.push(vec![k as f64, q, na, nb]);
        }
    }
    let mut fits = Table::new("exponents", &["q", "separated", "cell", "expected_separated"]);
    let mut ok = true;
    for &q in &cfg.qs {
        let rows: Vec<&Vec<f64>> = table.rows.iter().filter(|r| r[1] == q).collect();
        let pa: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].ln(), r[2].ln())).collect();
        let pb: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].ln(), r[3].ln())).collect();
        let (ea, eb) = (ls_slope(&pa), ls_slope(&pb));
        ok &= (ea - 1.0 / q).abs() <= cfg.tol && (eb - 0.5).abs() <= cfg.tol;
        if q == 2.0 {
            ok &= (ea - eb).abs() <= cfg.agree_tol;
        }
        fits.push(vec![q, ea, eb, 1.0 / q]);
    }
    let mut rep = Report::new(
        "q_detection",
        json!({"a": a.rows(), "b": b.rows(), "p": inf_to_json(cfg.p), "q": cfg.qs.iter().map(|&q| inf_to_json(q)).collect::<Vec<_>>(), "K": cfg.ks,
               "swapped": swapped, "j0": train.j_k.first(), "scales": train.i_k, "residue": train.residue, "N": train.n, "delta": delta}),
    );
    rep.seeds = vec![cfg.seed];
    rep.grid = json!({"n": cfg.grid.n, "extent": cfg.grid.extent});
    rep.tables = vec![table, fits];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetQuotientConfig {
    pub alpha: f64,
    pub beta: f64,
    pub p1: f64,
    pub p2: f64,
    pub q: f64,
    /// A-scales where atoms are planted
    pub scales: (i64, i64),
    /// δ = δ₀ 2^{-k} for k = 1..=halvings
    pub halvings: u32,
    pub grid: GridSpec,
    pub bound: f64,
    pub tol: f64,
}

impl Default for DetQuotientConfig {
    fn default() -> Self {
        Self { alpha: 0.0, beta: 0.0, p1: 2.0, p2: 2.0, q: 2.0, scales: (-2, 2), halvings: 3, grid: GridSpec::default(), bound: 10.0, tol: 0.1 }
    }
}

/// Single atoms in (A*)^iQ ∩ (B*)^jP: the two norms against |det A|^{αi}δ^{d(1−1/p₁)} and |det B|^{βj}δ^{d(1−1/p₂)}.
pub fn det_quotient(a: &ExpansiveMatrix, b: &ExpansiveMatrix, shape: BumpShape, cfg: &DetQuotientConfig) -> Result<Report> {
    let (an_a, an_b) = (Analyzer::new(a, shape)?, Analyzer::new(b, shape)?);
    let cp = CoverPair::new(an_a.profile(), an_b.profile())?;
    let d = a.dim() as f64;
    let quad = Quadrature::default();
    let (pa, pb) = (TlParams::new(cfg.alpha, cfg.p1, cfg.q), TlParams::new(cfg.beta, cfg.p2, cfg.q));
    let mut cells = vec![];
    for i in cfg.scales.0..=cfg.scales.1 {
        let Some((j0, j1)) = cp.j_interval(i) else { continue };
        let best = (j0..=j1)
            .filter_map(|j| plant_in(&[Target::cell(an_a.profile(), i), Target::cell(an_b.profile(), j)]).map(|(eta, r)| (j, eta, r)))
            .max_by(|x, y| x.2.total_cmp(&y.2));
        if let Some((j, eta, r)) = best {
            cells.push((i, j, eta, r.min(half_value_delta(a, i)?)));
        }
    }
    if cells.is_empty() {
        return Err(crate::Error::Plant("no intersecting cells in range".into()));
    }
    let jobs: Vec<(usize, u32)> = (0..cells.len()).flat_map(|c| (1..=cfg.halvings).map(move |k| (c, k))).collect();
    let rows: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(c, k)| -> Result<Vec<f64>> {
            let (i, j, eta, r) = &cells[c];
            let at = BumpAtom::new(r * 0.5f64.powi(k as i32), eta.clone(), Complex64::new(1.0, 0.0))?;
            let f = atoms_field(atom_grid(a.dim(), at.delta, cfg.grid.extent, cfg.grid.n)?, std::slice::from_ref(&at));
            let (na, nb) = (norm(&f, &an_a, &pa, &quad)?, norm(&f, &an_b, &pb, &quad)?);
            let wa = (cfg.alpha * *i as f64 * a.ln_det()).exp() * at.delta.powf(d * (1.0 - 1.0 / cfg.p1));
            let wb = (cfg.beta * *j as f64 * b.ln_det()).exp() * at.delta.powf(d * (1.0 - 1.0 / cfg.p2));
            Ok(vec![*i as f64, *j as f64, at.delta, na, nb, na / nb, (na / nb) / (wa / wb)])
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new("norms", &["i", "j", "delta", "norm_a", "norm_b", "ratio", "normalised"]);
    table.rows = rows;
    let expected = d * (1.0 / cfg.p2 - 1.0 / cfg.p1);
    let mut drift = Table::new("drift", &["i", "j", "slope", "expected"]);
    let mut ok = true;
    for (i, j, _, _) in &cells {
        let pts: Vec<(f64, f64)> = table.rows.iter().filter(|r| r[0] == *i as f64).map(|r| (r[2].ln(), r[5].ln())).collect();
        let s = ls_slope(&pts);
        ok &= (s - expected).abs() <= cfg.tol;
        drift.push(vec![*i as f64, *j as f64, s, expected]);
    }
    let s = spread(&table.column("normalised").unwrap_or_default());
    ok &= s < cfg.bound;
    let mut rep = Report::new(
        "det_quotient",
        json!({"a": a.rows(), "b": b.rows(), "alpha": cfg.alpha, "beta": cfg.beta, "p1": inf_to_json(cfg.p1), "p2": inf_to_json(cfg.p2), "q": inf_to_json(cfg.q),
               "scales": [cfg.scales.0, cfg.scales.1], "halvings": cfg.halvings, "normalised_spread": s, "bound": cfg.bound}),
    );
    rep.grid = json!({"n": cfg.grid.n, "extent": cfg.grid.extent});
    rep.tables = vec![table, drift];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoincidenceConfig {
    pub params: Vec<TlParams>,
    pub fields: usize,
    pub delta: f64,
    /// |η| range of the atoms
    pub radii: (f64, f64),
    pub extent: f64,
    /// grid refinements, n per axis
    pub ns: Vec<usize>,
    pub seed: u64,
    pub depth: i64,
    pub bound: f64,
    pub stability: f64,
    /// grid points for the pointwise swap check
    pub swap_points: usize,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        Self {
            params: vec![TlParams::new(0.0, 2.0, 2.0), TlParams::new(1.0, 1.0, 1.0), TlParams::new(0.0, f64::INFINITY, f64::INFINITY)],
            fields: 20,
            delta: 0.5,
            radii: (1.0, 4.0),
            extent: 48.0,
            ns: vec![256, 512],
            seed: 5,
            depth: 40,
            bound: 10.0,
            stability: 0.25,
            swap_points: 1000,
        }
    }
}

/// Atoms of the battery: even fields scatter 1..4 atoms in the annulus, odd fields put them at
/// geometrically spaced radii (a short train).
pub fn coincidence_battery(d: usize, cfg: &CoincidenceConfig) -> Result<Vec<Vec<BumpAtom>>> {
    (0..cfg.fields)
        .map(|k| {
            let mut r = sampling::rng(cfg.seed, k as u64);
            let m = 1 + k % 4;
            let (lo, hi) = cfg.radii;
            (0..m)
                .map(|t| {
                    let rad = if k % 2 == 0 {
                        lo + (hi - lo) * rand::Rng::random::<f64>(&mut r)
                    } else {
                        lo * (hi / lo).powf(t as f64 / m.max(2).saturating_sub(1) as f64)
                    };
                    let eta = sampling::direction(&mut r, d).into_iter().map(|u| u * rad).collect();
                    let c = Complex64::new(sampling::normal(&mut r), sampling::normal(&mut r));
                    BumpAtom::new(cfg.delta, eta, c)
                })
                .collect()
        })
        .collect()
}

/// max over sampled x and i of |det A|^{αi}|f ∗ φ_i(x)| / Σ_{j∈J_i} |det B|^{αj} ψ**_{j,β}f(x).
pub fn swap_constant(f: &SampledField, an_a: &Analyzer, an_b: &Analyzer, alpha: f64, beta: f64, points: usize, seed: u64) -> Result<f64> {
    let quad = Quadrature { shifts: 1, ..Quadrature::default() };
    let ps = pieces(f, an_a, None, &quad)?;
    let cp = CoverPair::new(an_a.profile(), an_b.profile())?;
    let zero = vec![0u128; f.dim()];
    let mut r = sampling::rng(seed, 0x5a);
    let idx: Vec<usize> = (0..points).map(|_| rand::Rng::random_range(&mut r, 0..f.len())).collect();
    let mut maximal: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut worst = 0.0f64;
    for (&i, g) in &ps.items {
        let lhs = g.modulus(&zero);
        let top = lhs.iter().copied().fold(0.0, f64::max);
        let Some((j0, j1)) = cp.j_interval(i) else { continue };
        for j in j0..=j1 {
            if let std::collections::btree_map::Entry::Vacant(e) = maximal.entry(j) {
                e.insert(peetre_maximal(f, an_b, j, beta)?);
            }
        }
        let wa = (alpha * i as f64 * an_a.ln_det()).exp();
        for &x in &idx {
            if lhs[x] <= 1e-3 * top {
                continue;
            }
            let rhs: f64 = (j0..=j1).map(|j| (alpha * j as f64 * an_b.ln_det()).exp() * maximal[&j][x]).sum();
            worst = worst.max(if rhs > 0.0 { wa * lhs[x] / rhs } else { f64::INFINITY });
        }
    }
    Ok(worst)
}

/// Equivalent pair: the A- and B-norms of a field battery stay within a bounded, grid-stable envelope.
pub fn coincidence(a: &ExpansiveMatrix, b: &ExpansiveMatrix, shape: BumpShape, cfg: &CoincidenceConfig) -> Result<Report> {
    require(a, b, cfg.depth, Verdict::Equivalent)?;
    let (an_a, an_b) = (Analyzer::new(a, shape)?, Analyzer::new(b, shape)?);
    let d = a.dim();
    let quad = Quadrature::default();
    let battery = coincidence_battery(d, cfg)?;
    let mut table = Table::new("ratios", &["n", "field", "alpha", "p", "q", "norm_a", "norm_b", "ratio"]);
    for &n in &cfg.ns {
        let grid = atom_grid(d, cfg.delta, cfg.extent, n)?;
        let jobs: Vec<(usize, usize)> = (0..battery.len()).flat_map(|k| (0..cfg.params.len()).map(move |t| (k, t))).collect();
        let rows: Vec<Vec<f64>> = jobs
            .par_iter()
            .map(|&(k, t)| -> Result<Vec<f64>> {
                let f = atoms_field(grid, &battery[k]);
                let prm = &cfg.params[t];
                let (na, nb) = (norm(&f, &an_a, prm, &quad)?, norm(&f, &an_b, prm, &quad)?);
                Ok(vec![n as f64, k as f64, prm.alpha, prm.p, prm.q, na, nb, na / nb])
            })
            .collect::<Result<_>>()?;
        table.rows.extend(rows);
    }
    let mut envelope = Table::new("envelope", &["n", "alpha", "p", "q", "min", "max", "spread", "swapped_min", "swapped_max"]);
    let mut ok = true;
    for prm in &cfg.params {
        let mut ends = vec![];
        for &n in &cfg.ns {
            let r: Vec<f64> = table.rows.iter().filter(|x| x[0] == n as f64 && x[2] == prm.alpha && x[3] == prm.p && x[4] == prm.q).map(|x| x[7]).collect();
            let (lo, hi) = (r.iter().copied().fold(f64::INFINITY, f64::min), r.iter().copied().fold(0.0, f64::max));
            ok &= spread(&r) < cfg.bound;
            envelope.push(vec![n as f64, prm.alpha, prm.p, prm.q, lo, hi, spread(&r), 1.0 / hi, 1.0 / lo]);
            ends.push((lo, hi));
        }
        for w in ends.windows(2) {
            ok &= ((w[1].0 - w[0].0) / w[0].0).abs() <= cfg.stability && ((w[1].1 - w[0].1) / w[0].1).abs() <= cfg.stability;
        }
    }
    // pointwise swap inequality on the first multi-atom field, per distinct α
    let mut swap = Table::new("swap", &["alpha", "beta", "constant"]);
    let f = atoms_field(atom_grid(d, cfg.delta, cfg.extent, cfg.ns[0])?, &battery[battery.len().min(2) - 1]);
    let mut alphas: Vec<f64> = cfg.params.iter().map(|p| p.alpha).collect();
    alphas.dedup();
    for prm in &cfg.params {
        if !alphas.contains(&prm.alpha) {
            continue;
        }
        alphas.retain(|&x| x != prm.alpha);
        let beta = prm.beta.unwrap_or(prm.beta_floor() + 1.0);
        let c = swap_constant(&f, &an_a, &an_b, prm.alpha, beta, cfg.swap_points, cfg.seed)?;
        ok &= c.is_finite();
        swap.push(vec![prm.alpha, beta, c]);
    }
    let mut rep = Report::new(
        "coincidence",
        json!({"a": a.rows(), "b": b.rows(), "params": params_json(&cfg.params), "fields": cfg.fields, "delta": cfg.delta, "radii": [cfg.radii.0, cfg.radii.1], "bound": cfg.bound, "stability": cfg.stability}),
    );
    rep.seeds = vec![cfg.seed];
    rep.grid = json!({"ns": cfg.ns, "extent": cfg.extent});
    rep.tables = vec![table, envelope, swap];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}
