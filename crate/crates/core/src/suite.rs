//! The acceptance battery: one report per criterion, written as it completes.

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::convolution::convolution_checks;
use crate::covers::{partition_residual, FourierProfile};
use crate::cubes::cube_battery;
use crate::equivalence::{adjoint_consistency, decide_equivalence, EquivConfig, Verdict};
use crate::error::{Error, Result};
use crate::experiments::{atom_train, coincidence, khintchine, q_detection, single_atom, GridSpec, SingleAtomConfig};
use crate::linalg::{Dilation, ExpansiveMatrix};
use crate::quasinorm::StepQuasiNorm;
use crate::report::{Outcome, Report, Table};
use crate::sampling;

pub const CRITERIA: [(u32, &str); 12] = [
    (1, "quasinorm"),
    (2, "ellipsoid"),
    (3, "classification"),
    (4, "partition"),
    (5, "single_atom"),
    (6, "atom_train"),
    (7, "khintchine"),
    (8, "q_detection"),
    (9, "coincidence"),
    (10, "convolution"),
    (11, "cubes"),
    (12, "determinism"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub criterion: u32,
    pub name: String,
    pub verdict: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub verdict: Outcome,
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn entry(&self, criterion: u32) -> Option<&SuiteEntry> {
        self.entries.iter().find(|e| e.criterion == criterion)
    }

    /// Verdicts and errors only; the reports are written separately.
    pub fn summary_json(&self) -> String {
        let entries: Vec<_> = self.entries.iter().map(|e| json!({"criterion": e.criterion, "name": e.name, "verdict": e.verdict, "error": e.error})).collect();
        serde_json::to_string_pretty(&json!({"verdict": self.verdict, "entries": entries})).expect("summary serialises")
    }
}

fn names(cfg: &RunConfig, list: &[String]) -> Result<Vec<(String, ExpansiveMatrix)>> {
    list.iter().map(|n| Ok((n.clone(), cfg.matrix(n)?))).collect()
}

/// ρ(0) = 0 and scale(Ax) = scale(x) + 1 on random points at random scales.
pub fn quasinorm_identities(cfg: &RunConfig) -> Result<Report> {
    let s = &cfg.quasinorm;
    let mut table = Table::new("identities", &["matrix", "points", "index_mismatches", "max_rel_error", "rho_zero"]);
    let mut ok = true;
    let battery = names(cfg, &s.battery)?;
    for (mi, (_, a)) in battery.iter().enumerate() {
        let q = StepQuasiNorm::from_matrix(a.clone())?;
        let d = a.dim();
        let zero = q.rho(&vec![0.0; d])?;
        let parts: Vec<(usize, f64)> = sampling::chunk_ranges(s.points, 128)
            .into_par_iter()
            .enumerate()
            .map(|(c, rg)| -> Result<(usize, f64)> {
                let mut r = sampling::rng(s.seed, (mi * 10_000 + c) as u64);
                let (mut bad, mut err) = (0usize, 0.0f64);
                for _ in rg {
                    let i = r.random_range(s.scales.0..=s.scales.1);
                    let x = q.sample_at_scale(&mut r, i);
                    let ax: Vec<f64> = (a.entries() * DVector::from_vec(x.clone())).iter().copied().collect();
                    let (j, j1) = (q.scale_index(&x)?, q.scale_index(&ax)?);
                    bad += (j1 != j + 1) as usize;
                    let (rx, rax) = (q.rho(&x)?, q.rho(&ax)?);
                    err = err.max((rax / (a.det_abs() * rx) - 1.0).abs());
                }
                Ok((bad, err))
            })
            .collect::<Result<_>>()?;
        let bad: usize = parts.iter().map(|p| p.0).sum();
        let err = parts.iter().map(|p| p.1).fold(0.0, f64::max);
        ok &= bad == 0 && err <= 1e-12 && zero == 0.0;
        table.push(vec![mi as f64, s.points as f64, bad as f64, err, zero]);
    }
    let mut rep = Report::new("quasinorm", json!({"battery": s.battery, "matrices": battery.iter().map(|(_, a)| a.rows()).collect::<Vec<_>>(), "points": s.points, "scales": [s.scales.0, s.scales.1]}));
    rep.seeds = vec![s.seed];
    rep.tables = vec![table];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

/// vol(Ω) = 1 and ‖A⁻¹‖_Ω ≤ θ < 1.
pub fn ellipsoid_certificates(cfg: &RunConfig) -> Result<Report> {
    let s = &cfg.ellipsoid;
    let mut table = Table::new("certificates", &["matrix", "volume", "theta", "contraction", "terms"]);
    let mut ok = true;
    let battery = names(cfg, &s.battery)?;
    for (mi, (_, a)) in battery.iter().enumerate() {
        let dil = Dilation::new(a.clone(), None)?;
        let e = &dil.ellipsoid;
        let (vol, theta, c) = (e.volume(), e.theta(), e.contraction(a));
        ok &= (vol - 1.0).abs() <= s.volume_tol && c <= theta && theta < 1.0;
        table.push(vec![mi as f64, vol, theta, c, e.terms() as f64]);
    }
    let mut rep = Report::new("ellipsoid", json!({"battery": s.battery, "matrices": battery.iter().map(|(_, a)| a.rows()).collect::<Vec<_>>(), "volume_tol": s.volume_tol}));
    rep.tables = vec![table];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

fn verdict_code(v: Verdict) -> f64 {
    match v {
        Verdict::Equivalent => 1.0,
        Verdict::Inequivalent => 0.0,
        Verdict::Inconclusive => -1.0,
    }
}

/// Both criteria agree with the expected verdict, and so does the transposed pair.
pub fn classification(cfg: &RunConfig) -> Result<Report> {
    let s = &cfg.classification;
    let ec = EquivConfig { shape: cfg.shape, ..EquivConfig::default() };
    let jobs: Vec<(&String, &String, Verdict)> =
        s.equivalent.iter().map(|(a, b)| (a, b, Verdict::Equivalent)).chain(s.inequivalent.iter().map(|(a, b)| (a, b, Verdict::Inequivalent))).collect();
    let mut table = Table::new("pairs", &["pair", "expected", "verdict", "power", "cover", "adjoint_agree", "growth_slope", "max_j", "max_i"]);
    let mut ok = true;
    for (k, (na, nb, want)) in jobs.iter().enumerate() {
        let (a, b) = (cfg.matrix(na)?, cfg.matrix(nb)?);
        let v = decide_equivalence(&a, &b, cfg.depth, &ec)?;
        let adj = adjoint_consistency(&a, &b, cfg.depth, &ec)?;
        ok &= v.verdict == *want && v.power_verdict == v.cover_verdict && adj.agree && !adj.skipped;
        table.push(vec![
            k as f64,
            verdict_code(*want),
            verdict_code(v.verdict),
            verdict_code(v.power_verdict),
            verdict_code(v.cover_verdict),
            adj.agree as u8 as f64,
            v.growth_slope,
            v.cover_stats.0 as f64,
            v.cover_stats.1 as f64,
        ]);
    }
    let pairs: Vec<_> = jobs.iter().map(|(a, b, _)| json!([a, b])).collect();
    let mut rep = Report::new("classification", json!({"pairs": pairs, "depth": cfg.depth, "slope_tol": ec.slope_tol, "cover_cap": ec.cover_cap}));
    rep.tables = vec![table];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

/// max |Σ_i φ̂((A*)^iξ) − 1| over log-uniform random frequencies.
pub fn partition_of_unity(cfg: &RunConfig) -> Result<Report> {
    let s = &cfg.partition;
    let mut table = Table::new("residuals", &["matrix", "points", "residual"]);
    let mut ok = true;
    let battery = names(cfg, &s.battery)?;
    for (mi, (_, a)) in battery.iter().enumerate() {
        let prof = FourierProfile::new(a, cfg.shape)?;
        let mut r = sampling::rng(s.seed, mi as u64);
        let xis: Vec<Vec<f64>> = (0..s.points)
            .map(|_| {
                let t = 10f64.powf(r.random_range(s.decades.0..s.decades.1));
                sampling::direction(&mut r, a.dim()).into_iter().map(|v| v * t).collect()
            })
            .collect();
        let res = partition_residual(&prof, &xis);
        ok &= res <= s.tol;
        table.push(vec![mi as f64, s.points as f64, res]);
    }
    let mut rep = Report::new("partition", json!({"battery": s.battery, "points": s.points, "decades": [s.decades.0, s.decades.1], "tol": s.tol, "spread": cfg.shape.spread}));
    rep.seeds = vec![s.seed];
    rep.tables = vec![table];
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

/// Single-atom ratios at n and 2n points per axis; each ratio must move by less than `stability`.
pub fn single_atom_stable(cfg: &RunConfig) -> Result<Report> {
    let s = &cfg.single_atom;
    let a = cfg.matrix(&s.matrix)?;
    let coarse = single_atom(&a, cfg.shape, &s.config)?;
    let fine_cfg = SingleAtomConfig { grid: GridSpec { n: 2 * s.config.grid.n, ..s.config.grid }, ..s.config.clone() };
    let fine = single_atom(&a, cfg.shape, &fine_cfg)?;
    let (rc, rf) = (coarse.table("ratios").expect("ratios"), fine.table("ratios").expect("ratios"));
    let mut stab = Table::new("stability", &["alpha", "p", "q", "i0", "coarse", "fine", "change"]);
    let mut ok = coarse.verdict.passed() && fine.verdict.passed() && rc.rows.len() == rf.rows.len();
    for (x, y) in rc.rows.iter().zip(&rf.rows) {
        let change = (y[5] / x[5] - 1.0).abs();
        ok &= change <= s.stability && x[..4] == y[..4];
        stab.push(vec![x[0], x[1], x[2], x[3], x[5], y[5], change]);
    }
    let mut rep = Report::new("single_atom", json!({"coarse": coarse.params, "n": [s.config.grid.n, fine_cfg.grid.n], "stability": s.stability}));
    rep.grid = json!({"n": [s.config.grid.n, fine_cfg.grid.n], "extent": s.config.grid.extent});
    for (tag, r) in [("coarse", coarse), ("fine", fine)] {
        for mut t in r.tables {
            t.title = format!("{}_{tag}", t.title);
            rep.tables.push(t);
        }
    }
    rep.tables.push(stab);
    rep.verdict = Outcome::from_bool(ok);
    Ok(rep)
}

fn run_one(cfg: &RunConfig, criterion: u32) -> Result<Report> {
    match criterion {
        1 => quasinorm_identities(cfg),
        2 => ellipsoid_certificates(cfg),
        3 => classification(cfg),
        4 => partition_of_unity(cfg),
        5 => single_atom_stable(cfg),
        6 => atom_train(&cfg.matrix(&cfg.atom_train.matrix)?, cfg.shape, &cfg.atom_train.config),
        7 => khintchine(&cfg.khintchine),
        8 => q_detection(&cfg.matrix(&cfg.q_detection.a)?, &cfg.matrix(&cfg.q_detection.b)?, cfg.shape, &cfg.q_detection.config),
        9 => coincidence(&cfg.matrix(&cfg.coincidence.a)?, &cfg.matrix(&cfg.coincidence.b)?, cfg.shape, &cfg.coincidence.config),
        10 => convolution_checks(cfg.shape, &cfg.convolution),
        11 => cube_battery(&cfg.cubes),
        _ => Err(Error::Param(format!("no criterion {criterion}"))),
    }
}

fn entry(criterion: u32, res: Result<Report>) -> SuiteEntry {
    let name = CRITERIA[criterion as usize - 1].1.to_string();
    match res {
        Ok(r) => SuiteEntry { criterion, name, verdict: r.verdict, error: None, report: Some(r) },
        Err(e) => SuiteEntry { criterion, name, verdict: Outcome::Fail, error: Some(e.to_string()), report: None },
    }
}

fn write_entry(dir: &Path, e: &SuiteEntry) -> Result<()> {
    let stem = format!("{:02}-{}", e.criterion, e.name);
    if let Some(r) = &e.report {
        std::fs::write(dir.join(format!("{stem}.json")), r.to_json())?;
        std::fs::write(dir.join(format!("{stem}.csv")), r.to_csv())?;
    }
    Ok(())
}

/// Seconds per criterion, kept apart from the numeric artifacts.
pub type Timings = Vec<(u32, f64)>;

fn battery(cfg: &RunConfig, out: Option<&Path>, on_done: &mut (dyn FnMut(&SuiteEntry, f64) + Send)) -> Result<(Vec<SuiteEntry>, Timings)> {
    let mut entries = vec![];
    let mut times = vec![];
    for (c, _) in CRITERIA.iter().take(11) {
        if !cfg.runs(*c) {
            continue;
        }
        let t = Instant::now();
        let e = entry(*c, run_one(cfg, *c));
        let secs = t.elapsed().as_secs_f64();
        if let Some(dir) = out {
            write_entry(dir, &e)?;
        }
        on_done(&e, secs);
        times.push((*c, secs));
        entries.push(e);
    }
    Ok((entries, times))
}

/// Runs the configured criteria in order; with `repeat`, runs them again and compares the reports.
/// Artifacts go to `out` when given: one JSON and one CSV per criterion, `suite.json`, `timings.json`, `config.toml`.
pub fn run_suite(cfg: &RunConfig, out: Option<&Path>, on_done: &mut (dyn FnMut(&SuiteEntry, f64) + Send)) -> Result<(SuiteReport, Timings)> {
    cfg.validate()?;
    let go = |on_done: &mut (dyn FnMut(&SuiteEntry, f64) + Send)| -> Result<(SuiteReport, Timings)> {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
        }
        let (mut entries, mut times) = battery(cfg, out, on_done)?;
        if cfg.repeat && cfg.runs(12) {
            let t = Instant::now();
            let (again, _) = battery(cfg, None, &mut |_, _| {})?;
            let mut table = Table::new("compare", &["criterion", "identical"]);
            let mut ok = again.len() == entries.len();
            for (x, y) in entries.iter().zip(&again) {
                let same = serde_json::to_string(x).ok() == serde_json::to_string(y).ok();
                ok &= same;
                table.push(vec![x.criterion as f64, same as u8 as f64]);
            }
            let mut rep = Report::new("determinism", json!({"criteria": entries.iter().map(|e| e.criterion).collect::<Vec<_>>()}));
            rep.tables = vec![table];
            rep.verdict = Outcome::from_bool(ok);
            let e = entry(12, Ok(rep));
            let secs = t.elapsed().as_secs_f64();
            if let Some(dir) = out {
                write_entry(dir, &e)?;
            }
            on_done(&e, secs);
            times.push((12, secs));
            entries.push(e);
        }
        let verdict = Outcome::from_bool(!entries.is_empty() && entries.iter().all(|e| e.verdict.passed()));
        let rep = SuiteReport { verdict, entries };
        if let Some(dir) = out {
            std::fs::write(dir.join("suite.json"), rep.summary_json())?;
            let t: Vec<_> = times.iter().map(|(c, s)| json!({"criterion": c, "seconds": s})).collect();
            std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&t).expect("timings serialise"))?;
        }
        Ok((rep, times))
    };
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(|e| Error::Param(e.to_string()))?;
        pool.install(|| go(on_done))
    } else {
        go(on_done)
    }
}
