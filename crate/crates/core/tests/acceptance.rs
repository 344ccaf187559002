//! Full acceptance battery with the default configuration, repeated once for the determinism check.

use std::path::PathBuf;

use aniso_tl::config::RunConfig;
use aniso_tl::report::Report;
use aniso_tl::suite::{run_suite, CRITERIA};

// Wall-clock budgets in seconds, per criterion.
const BUDGET: [f64; 12] = [5.0, 1.0, 30.0, 10.0, 300.0, 300.0, 10.0, 600.0, 600.0, 120.0, 300.0, 2400.0];

#[test]
fn acceptance() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&dir);
    let cfg = RunConfig { repeat: true, ..Default::default() };
    let (rep, times) = run_suite(&cfg, Some(&dir), &mut |e, secs| {
        let line = format!("criterion {:>2} {:<15} {:?} ({secs:.1}s)", e.criterion, e.name, e.verdict);
        println!("{line}");
        if let Some(err) = &e.error {
            println!("    error: {err}");
        }
    })
    .expect("suite runs");

    let total: f64 = times.iter().map(|(_, s)| s).sum();
    let mut failed = vec![];
    println!();
    for (c, name) in CRITERIA {
        let e = rep.entry(c);
        let secs = times.iter().find(|(k, _)| *k == c).map(|t| t.1);
        // the determinism budget covers both passes
        let budget_secs = if c == 12 { Some(total) } else { secs };
        let in_budget = budget_secs.is_some_and(|s| s < BUDGET[c as usize - 1]);
        let ok = e.is_some_and(|e| e.verdict.passed()) && in_budget;
        println!("{} criterion {c} {name} ({:.1}s of {:.0}s)", if ok { "PASS" } else { "FAIL" }, budget_secs.unwrap_or(f64::NAN), BUDGET[c as usize - 1]);
        if !ok {
            failed.push(c);
        }
    }

    for e in rep.entries.iter().filter(|e| e.criterion < 12) {
        let stem = format!("{:02}-{}", e.criterion, e.name);
        let json = std::fs::read_to_string(dir.join(format!("{stem}.json"))).expect("report written");
        let back: Report = serde_json::from_str(&json).expect("report parses");
        assert_eq!(back.to_json(), json, "{stem} round trip");
        assert!(dir.join(format!("{stem}.csv")).exists());
    }
    assert!(dir.join("suite.json").exists() && dir.join("config.toml").exists());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
