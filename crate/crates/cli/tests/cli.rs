use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aniso-tl")).args(args).output().expect("binary runs")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn tmp(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn equiv_inequivalent_pair_exits_one() {
    let o = run(&["equiv", "--a", &data("two_id.mat"), "--b", &data("diag24.mat")]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["params"]["verdict"], "inequivalent");
}

#[test]
fn equiv_equivalent_pair_exits_zero() {
    let o = run(&["equiv", "--a", "two_id", "--b", "two_rot"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["params"]["verdict"], "equivalent");
}

#[test]
fn khintchine_pair_ratio_two() {
    let out = tmp("khintchine");
    let o = run(&["experiment", "khintchine", "--p", "4", "--coeffs", "1,1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o)["params"]["ratio"].as_f64().unwrap();
    assert!((r - 2.0).abs() < 1e-12);
    assert!(out.join("khintchine.json").exists());
    let csv = std::fs::read_to_string(out.join("khintchine.csv")).unwrap();
    assert!(csv.starts_with("# ratio\np,K,ratio,"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = run(&["--config", "/nonexistent/run.toml", "rho", "--matrix", "two_id", "--point", "1,0"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}

#[test]
fn invalid_config_and_arguments_are_usage_errors() {
    assert_eq!(run(&["--config", &data("bad.toml"), "suite"]).status.code(), Some(64));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&["rho", "--matrix", "nope", "--point", "1,0"]).status.code(), Some(64));
    assert_eq!(run(&["rho", "--matrix", "two_id", "--point", "1,0,0"]).status.code(), Some(64));
    assert_eq!(run(&["cubes", "--matrix", "two_id", "--seq", &data("seq.txt"), "--op", "pairing"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn rho_shifts_by_one_scale() {
    let o = run(&["rho", "--matrix", &data("diag24.mat"), "--point", "0.3,-1.7", "--point", "0.6,-6.8", "--point", "0,0"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    let rows = v["tables"][0]["rows"].as_array().unwrap();
    let s0 = rows[0][2].as_f64().unwrap();
    assert_eq!(rows[1][2].as_f64().unwrap(), s0 + 1.0);
    assert_eq!(rows[1][3].as_f64().unwrap(), 8.0 * rows[0][3].as_f64().unwrap());
    assert_eq!(rows[2][3].as_f64().unwrap(), 0.0);
}

#[test]
fn ellipsoid_certificate() {
    let o = run(&["ellipsoid", "--matrix", "jordan"]);
    assert_eq!(o.status.code(), Some(0));
    let row = &json(&o)["tables"][0]["rows"][0];
    assert!((row[0].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!(row[1].as_f64().unwrap() <= row[2].as_f64().unwrap());
}

#[test]
fn covers_table() {
    let o = run(&["covers", "--a", "two_id", "--b", "diag24", "--range", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["tables"][0]["rows"].as_array().unwrap().len(), 9);
}

#[test]
fn cube_operations() {
    let seq = data("seq.txt");
    let c = |op: &str, extra: &[&str]| {
        let mut args = vec!["cubes", "--matrix", "two_id", "--seq", seq.as_str(), "--op", op];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        json(&o)["tables"][0]["rows"][0].clone()
    };
    let f1 = c("f1inf", &[])[0].as_f64().unwrap();
    assert!(f1 > 0.0);
    let b = c("carleson", &["--method", "bruteforce"]);
    assert_eq!(b[0], b[1]);
    let g = c("carleson", &[]);
    assert!(g[0].as_f64().unwrap() <= b[0].as_f64().unwrap() + 1e-12 && b[0].as_f64().unwrap() <= g[1].as_f64().unwrap() + 1e-12);
    let other = data("other.txt");
    let p = c("pairing", &["--other", other.as_str()]);
    // only the cube (0; 0, 0) is shared: 1·conj(i)
    assert_eq!(p[0].as_f64().unwrap(), 0.0);
    assert_eq!(p[1].as_f64().unwrap(), -1.0);
}

#[test]
fn tl_norm_of_an_atom_file() {
    let dir = tmp("atoms");
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("atoms.txt");
    std::fs::write(&f, "# delta eta re im\n0.5 3 1 1 0\n").unwrap();
    let o = run(&["tl-norm", "--matrix", "two_id", "--atoms", f.to_str().unwrap(), "--n", "128", "--extent", "24"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let row = &json(&o)["tables"][0]["rows"][0];
    let (tl, lp) = (row[3].as_f64().unwrap(), row[4].as_f64().unwrap());
    assert!(tl > 0.0 && tl <= lp * (1.0 + 1e-9));
}

#[test]
fn small_suite_writes_artifacts() {
    let out = tmp("suite");
    let o = run(&["--config", &data("small.toml"), "--out", out.to_str().unwrap(), "suite"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["verdict"], "PASS");
    assert_eq!(v["entries"].as_array().unwrap().len(), 3);
    for f in ["01-quasinorm.json", "02-ellipsoid.csv", "07-khintchine.json", "suite.json", "timings.json", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let first = std::fs::read(out.join("07-khintchine.json")).unwrap();
    let o = run(&["--config", &data("small.toml"), "--out", out.to_str().unwrap(), "suite"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(out.join("07-khintchine.json")).unwrap(), first);
}
