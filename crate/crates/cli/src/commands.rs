use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::json;

use aniso_tl::atoms::{atom_grid, atoms_field, BumpAtom};
use aniso_tl::config::RunConfig;
use aniso_tl::covers::{CoverPair, FourierProfile};
use aniso_tl::cubes::{carleson_constant, f1inf_norm, finf1_norm_def, finf1_norm_tent, pairing, pairing_bound_check, CarlesonMethod, CubeGeometry, CubeSequence};
use aniso_tl::equivalence::{cover_stat, decide_equivalence, EquivConfig, Verdict};
use aniso_tl::experiments::{self, khintchine_bracket, sign_moment_exact, sign_moment_mc, DetQuotientConfig};
use aniso_tl::field::{lp_norm, Quadrature, SampledField};
use aniso_tl::linalg::{Dilation, ExpansiveMatrix};
use aniso_tl::quasinorm::StepQuasiNorm;
use aniso_tl::report::{Outcome, Report, Table};
use aniso_tl::suite::run_suite;
use aniso_tl::tl_norm::{norm, tl_norm_maximal, Analyzer, TlParams};
use aniso_tl::convolution::convolution_checks;
use aniso_tl::cubes::cube_battery;

use crate::{CliError, Command, CubeOp, Experiment, FAIL, INCONCLUSIVE, PASS};

const EXHAUSTIVE_MAX: usize = 24;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// An existing file of whitespace rows, else a matrix name from the configuration.
fn matrix(cfg: &RunConfig, spec: &str) -> Result<ExpansiveMatrix, CliError> {
    let p = Path::new(spec);
    if p.is_file() {
        return ExpansiveMatrix::parse(&read(p)?).map_err(|e| CliError::Usage(format!("{spec}: {e}")));
    }
    cfg.matrix(spec).map_err(|e| CliError::Usage(format!("{spec}: {e}")))
}

fn floats(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("not a number: {t:?}")))).collect()
}

fn emit(rep: &Report, out: Option<&Path>) -> Result<(), CliError> {
    println!("{}", rep.to_json());
    if let Some(dir) = out {
        let w = |e: std::io::Error| CliError::Write(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(w)?;
        std::fs::write(dir.join(format!("{}.json", rep.name)), rep.to_json()).map_err(w)?;
        std::fs::write(dir.join(format!("{}.csv", rep.name)), rep.to_csv()).map_err(w)?;
    }
    Ok(())
}

fn finish(rep: &Report, out: Option<&Path>) -> Result<u8, CliError> {
    emit(rep, out)?;
    Ok(if rep.verdict.passed() { PASS } else { FAIL })
}

pub fn run(cmd: Command, cfg: &RunConfig, out: Option<&Path>) -> Result<u8, CliError> {
    match cmd {
        Command::Rho { matrix: m, points } => rho(&matrix(cfg, &m)?, &points, out),
        Command::Ellipsoid { matrix: m, theta } => ellipsoid(matrix(cfg, &m)?, theta, out),
        Command::Covers { a, b, range } => covers(cfg, &matrix(cfg, &a)?, &matrix(cfg, &b)?, range, out),
        Command::Equiv { a, b, depth } => equiv(cfg, &matrix(cfg, &a)?, &matrix(cfg, &b)?, depth.unwrap_or(cfg.depth), out),
        Command::TlNorm { matrix: m, atoms, field, alpha, p, q, n, extent, maximal } => {
            let a = matrix(cfg, &m)?;
            let f = match (atoms, field) {
                (Some(path), _) => atom_file(a.dim(), &path, n, extent)?,
                (None, Some(path)) => {
                    let mut file = std::fs::File::open(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                    SampledField::read_from(&mut file).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
                }
                (None, None) => return Err(CliError::Usage("need --atoms or --field".into())),
            };
            tl(cfg, &a, &f, TlParams::new(alpha, p, q), maximal, out)
        }
        Command::Cubes { matrix: m, seq, op, other, method, margin } => {
            let method: CarlesonMethod = method.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
            cubes(&matrix(cfg, &m)?, &seq, op, other.as_deref(), method, margin, out)
        }
        Command::Experiment { name, a, b, p, coeffs, seed } => experiment(cfg, name, a, b, p, coeffs, seed, out),
        Command::Suite { only, no_repeat, workers } => {
            let mut cfg = cfg.clone();
            if !only.is_empty() {
                cfg.only = only;
            }
            cfg.repeat &= !no_repeat;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            suite(&cfg, out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.clone()))
        }
    }
}

fn rho(a: &ExpansiveMatrix, points: &[String], out: Option<&Path>) -> Result<u8, CliError> {
    let q = StepQuasiNorm::from_matrix(a.clone())?;
    let d = a.dim();
    let mut cols: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    cols.extend(["scale".into(), "rho".into()]);
    let mut t = Table::new("rho", &cols.iter().map(String::as_str).collect::<Vec<_>>());
    for s in points {
        let x = floats(s)?;
        if x.len() != d {
            return Err(CliError::Usage(format!("point {s} has {} coordinates, matrix is {d}x{d}", x.len())));
        }
        let scale = if x.iter().all(|v| *v == 0.0) { f64::NAN } else { q.scale_index(&x)? as f64 };
        let mut row = x.clone();
        row.extend([scale, q.rho(&x)?]);
        t.push(row);
    }
    let mut rep = Report::new("rho", json!({"matrix": a.rows(), "det": a.det_abs(), "ellipsoid": q.dilation().ellipsoid.record()}));
    rep.tables = vec![t];
    rep.verdict = Outcome::Pass;
    finish(&rep, out)
}

fn ellipsoid(a: ExpansiveMatrix, theta: Option<f64>, out: Option<&Path>) -> Result<u8, CliError> {
    let dil = Dilation::new(a.clone(), theta)?;
    let e = &dil.ellipsoid;
    let (vol, contraction) = (e.volume(), e.contraction(&a));
    let mut t = Table::new("certificate", &["volume", "contraction", "theta", "terms"]);
    t.push(vec![vol, contraction, e.theta(), e.terms() as f64]);
    let mut rep = Report::new("ellipsoid", json!({"matrix": a.rows(), "ellipsoid": e.record(), "semi_axes": e.semi_axes()}));
    rep.tables = vec![t];
    rep.verdict = Outcome::from_bool((vol - 1.0).abs() <= 1e-8 && contraction <= e.theta() && e.theta() < 1.0);
    finish(&rep, out)
}

fn covers(cfg: &RunConfig, a: &ExpansiveMatrix, b: &ExpansiveMatrix, range: i64, out: Option<&Path>) -> Result<u8, CliError> {
    if range < 1 {
        return Err(CliError::Usage("range must be positive".into()));
    }
    let (qa, pb) = (FourierProfile::new(a, cfg.shape)?, FourierProfile::new(b, cfg.shape)?);
    let cp = CoverPair::new(&qa, &pb)?;
    let mut t = Table::new("intersections", &["i", "j_lo", "j_hi", "count"]);
    for i in -range..=range {
        match cp.j_interval(i) {
            Some((lo, hi)) => t.push(vec![i as f64, lo as f64, hi as f64, (hi - lo + 1) as f64]),
            None => t.push(vec![i as f64, f64::NAN, f64::NAN, 0.0]),
        }
    }
    let stat = cover_stat(&qa, &pb, range)?;
    let mut rep = Report::new("covers", json!({"a": a.rows(), "b": b.rows(), "shape": cfg.shape, "range": range, "stat": stat}));
    rep.tables = vec![t];
    rep.verdict = Outcome::Pass;
    finish(&rep, out)
}

fn equiv(cfg: &RunConfig, a: &ExpansiveMatrix, b: &ExpansiveMatrix, depth: i64, out: Option<&Path>) -> Result<u8, CliError> {
    if depth < 8 {
        return Err(CliError::Usage("depth must be at least 8".into()));
    }
    let ec = EquivConfig { shape: cfg.shape, ..EquivConfig::default() };
    let v = decide_equivalence(a, b, depth, &ec)?;
    let mut pn = Table::new("power_norms", &["k", "ln_s"]);
    for (k, s) in &v.power_norm_table {
        pn.push(vec![*k as f64, *s]);
    }
    let mut cd = Table::new("cover_doublings", &["range", "max_j", "max_i"]);
    for c in &v.cover_doublings {
        cd.push(vec![c.range as f64, c.max_j as f64, c.max_i as f64]);
    }
    let mut rep = Report::new(
        "equiv",
        json!({"a": a.rows(), "b": b.rows(), "depth": depth, "config": ec, "verdict": v.verdict, "power_verdict": v.power_verdict,
               "cover_verdict": v.cover_verdict, "c_exponent": v.c_exponent, "growth_slope": v.growth_slope, "cover_stats": v.cover_stats}),
    );
    rep.tables = vec![pn, cd];
    rep.verdict = Outcome::from_bool(v.verdict == Verdict::Equivalent);
    emit(&rep, out)?;
    Ok(match v.verdict {
        Verdict::Equivalent => PASS,
        Verdict::Inequivalent => FAIL,
        Verdict::Inconclusive => INCONCLUSIVE,
    })
}

fn atom_file(d: usize, path: &Path, n: usize, extent: f64) -> Result<SampledField, CliError> {
    let mut atoms = vec![];
    for (ln, line) in read(path)?.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line.split_whitespace().map(|t| t.parse::<f64>()).collect::<Result<_, _>>().map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        if v.len() != d + 3 {
            return Err(CliError::Usage(format!("{}:{}: expected {} numbers (delta, eta, re, im)", path.display(), ln + 1, d + 3)));
        }
        let atom = BumpAtom::new(v[0], v[1..=d].to_vec(), Complex64::new(v[d + 1], v[d + 2])).map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        atoms.push(atom);
    }
    if atoms.is_empty() {
        return Err(CliError::Usage(format!("{}: no atoms", path.display())));
    }
    if !n.is_power_of_two() {
        return Err(CliError::Usage(format!("n = {n} is not a power of two")));
    }
    let delta = atoms.iter().map(|a| a.delta).fold(f64::INFINITY, f64::min);
    let grid = atom_grid(d, delta, extent, n).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(atoms_field(grid, &atoms))
}

fn tl(cfg: &RunConfig, a: &ExpansiveMatrix, f: &SampledField, prm: TlParams, maximal: bool, out: Option<&Path>) -> Result<u8, CliError> {
    prm.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if f.dim() != a.dim() {
        return Err(CliError::Usage(format!("field is {}-dimensional, matrix is {}x{}", f.dim(), a.dim(), a.dim())));
    }
    let an = Analyzer::new(a, cfg.shape)?;
    let quad = Quadrature::default();
    let v = if maximal { tl_norm_maximal(f, &an, &prm, &quad)? } else { norm(f, &an, &prm, &quad)? };
    let mut t = Table::new("norm", &["alpha", "p", "q", "tl", "lp"]);
    t.push(vec![prm.alpha, prm.p, prm.q, v, lp_norm(f, prm.p, &quad)]);
    let mut rep = Report::new("tl_norm", json!({"matrix": a.rows(), "params": prm, "maximal": maximal, "shape": cfg.shape, "quadrature": quad}));
    rep.grid = json!({"d": f.dim(), "n": f.n(), "X": f.half_width()});
    rep.seeds = vec![quad.seed];
    rep.tables = vec![t];
    rep.verdict = Outcome::from_bool(v.is_finite());
    finish(&rep, out)
}

fn sequence(path: &Path) -> Result<CubeSequence, CliError> {
    CubeSequence::parse(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn cubes(a: &ExpansiveMatrix, seq: &Path, op: CubeOp, other: Option<&Path>, method: CarlesonMethod, margin: i64, out: Option<&Path>) -> Result<u8, CliError> {
    let g = CubeGeometry::new(a)?;
    let c = sequence(seq)?;
    if c.dim().is_some_and(|d| d != a.dim()) {
        return Err(CliError::Usage(format!("{}: cubes are not {}-dimensional", seq.display(), a.dim())));
    }
    let mut params = json!({"matrix": a.rows(), "cubes": c.len(), "margin": margin});
    let mut t;
    match op {
        CubeOp::F1inf | CubeOp::Finf1 | CubeOp::Finf1Tent => {
            let v = match op {
                CubeOp::F1inf => f1inf_norm(&g, &c)?,
                CubeOp::Finf1 => finf1_norm_def(&g, &c, margin)?,
                _ => finf1_norm_tent(&g, &c, margin)?,
            };
            t = Table::new("norm", &["value"]);
            t.push(vec![v]);
        }
        CubeOp::Carleson => {
            let e = carleson_constant(&g, &c, method)?;
            params["method"] = json!(method);
            params["witness"] = json!(e.witness);
            t = Table::new("carleson", &["lower", "upper"]);
            t.push(vec![e.lower, e.upper]);
        }
        CubeOp::Pairing => {
            let cp = sequence(other.ok_or_else(|| CliError::Usage("pairing needs --other".into()))?)?;
            let z = pairing(&c, &cp);
            let chk = pairing_bound_check(&g, &c, &cp, margin, f64::INFINITY)?;
            t = Table::new("pairing", &["re", "im", "f1inf", "finf1", "ratio"]);
            t.push(vec![z.re, z.im, chk.f1inf, chk.finf1, chk.ratio]);
        }
    }
    let name = format!("cubes_{}", format!("{op:?}").to_lowercase());
    let mut rep = Report::new(&name, params);
    rep.tables = vec![t];
    rep.verdict = Outcome::Pass;
    finish(&rep, out)
}

fn khintchine_ratio(p: f64, a: &[f64], seed: u64, trials: usize) -> Result<Report, CliError> {
    if a.is_empty() || a.len() > EXHAUSTIVE_MAX {
        return Err(CliError::Usage(format!("need 1..={EXHAUSTIVE_MAX} coefficients")));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(CliError::Usage(format!("p = {p} must be positive and finite")));
    }
    let l2p = a.iter().map(|x| x * x).sum::<f64>().powf(p / 2.0);
    if l2p == 0.0 {
        return Err(CliError::Usage("coefficients are all zero".into()));
    }
    let ex = sign_moment_exact(a, p) / l2p;
    let (mc, se) = sign_moment_mc(a, p, trials, seed);
    let (mc, se) = (mc / l2p, se / l2p);
    let (lo, hi) = khintchine_bracket(p);
    let mut t = Table::new("ratio", &["p", "K", "ratio", "mc", "se", "lower", "upper"]);
    t.push(vec![p, a.len() as f64, ex, mc, se, lo, hi]);
    let mut rep = Report::new("khintchine", json!({"p": p, "coeffs": a, "trials": trials, "ratio": ex}));
    rep.seeds = vec![seed];
    rep.tables = vec![t];
    rep.verdict = Outcome::from_bool(ex >= lo * (1.0 - 1e-12) && ex <= hi * (1.0 + 1e-12) && (mc - ex).abs() <= 3.0 * se + 1e-12 * ex);
    Ok(rep)
}

#[allow(clippy::too_many_arguments)]
fn experiment(cfg: &RunConfig, name: Experiment, a: Option<String>, b: Option<String>, p: Option<f64>, coeffs: Option<String>, seed: Option<u64>, out: Option<&Path>) -> Result<u8, CliError> {
    let pick = |given: &Option<String>, default: &str| matrix(cfg, given.as_deref().unwrap_or(default));
    let rep = match name {
        Experiment::SingleAtom => experiments::single_atom(&pick(&a, &cfg.single_atom.matrix)?, cfg.shape, &cfg.single_atom.config)?,
        Experiment::AtomTrain => experiments::atom_train(&pick(&a, &cfg.atom_train.matrix)?, cfg.shape, &cfg.atom_train.config)?,
        Experiment::Khintchine => {
            let kc = &cfg.khintchine;
            match coeffs {
                Some(s) => khintchine_ratio(p.unwrap_or(2.0), &floats(&s)?, seed.unwrap_or(kc.seed), kc.trials)?,
                None => {
                    let mut kc = kc.clone();
                    if let Some(p) = p {
                        kc.ps = vec![p];
                    }
                    kc.seed = seed.unwrap_or(kc.seed);
                    experiments::khintchine(&kc)?
                }
            }
        }
        Experiment::QDetection => experiments::q_detection(&pick(&a, &cfg.q_detection.a)?, &pick(&b, &cfg.q_detection.b)?, cfg.shape, &cfg.q_detection.config)?,
        Experiment::DetQuotient => experiments::det_quotient(&pick(&a, &cfg.q_detection.a)?, &pick(&b, &cfg.q_detection.b)?, cfg.shape, &DetQuotientConfig::default())?,
        Experiment::Coincidence => experiments::coincidence(&pick(&a, &cfg.coincidence.a)?, &pick(&b, &cfg.coincidence.b)?, cfg.shape, &cfg.coincidence.config)?,
        Experiment::Convolution => {
            let mut cc = cfg.convolution.clone();
            cc.seed = seed.unwrap_or(cc.seed);
            convolution_checks(cfg.shape, &cc)?
        }
        Experiment::Cubes => {
            let mut cc = cfg.cubes.clone();
            cc.seed = seed.unwrap_or(cc.seed);
            cube_battery(&cc)?
        }
    };
    finish(&rep, out)
}

fn suite(cfg: &RunConfig, dir: PathBuf) -> Result<u8, CliError> {
    let (rep, _) = run_suite(cfg, Some(&dir), &mut |e, secs| {
        eprintln!("criterion {:>2} {:<15} {:?} ({secs:.1}s){}", e.criterion, e.name, e.verdict, e.error.as_deref().map(|m| format!(": {m}")).unwrap_or_default());
    })
    .map_err(|e| match e {
        aniso_tl::Error::Io(m) => CliError::Write(m),
        e => CliError::Run(e),
    })?;
    println!("{}", rep.summary_json());
    eprintln!("artifacts in {}", dir.display());
    Ok(if rep.verdict.passed() { PASS } else { FAIL })
}
