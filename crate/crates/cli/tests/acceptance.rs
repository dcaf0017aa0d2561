//! Acceptance suite: runs the `verify` subcommand of the built binary end to
//! end, asserts every criterion passes within its runtime budget, checks
//! byte-identical reruns, and exercises the CLI contracts (exit codes,
//! artifacts, config errors).
//!
//! One pass/fail line per criterion is printed to the test output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fshedge")
}

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fshedge-acceptance-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

#[derive(serde::Deserialize)]
struct Criterion {
    id: u32,
    name: String,
    passed: bool,
    details: BTreeMap<String, f64>,
}

#[derive(serde::Deserialize)]
struct Report {
    schema: String,
    criteria: Vec<Criterion>,
    all_passed: bool,
}

fn parse_timings(stderr: &str) -> BTreeMap<u32, f64> {
    let mut out = BTreeMap::new();
    for line in stderr.lines() {
        // "criterion  3: 1.0s"
        if let Some(rest) = line.trim().strip_prefix("criterion ") {
            if let Some((id, secs)) = rest.split_once(':') {
                if let (Ok(id), Ok(secs)) =
                    (id.trim().parse::<u32>(), secs.trim().trim_end_matches('s').parse::<f64>())
                {
                    out.insert(id, secs);
                }
            }
        }
    }
    out
}

fn read_report(dir: &Path) -> Report {
    let text = std::fs::read_to_string(dir.join("verify.json")).expect("verify.json written");
    serde_json::from_str(&text).expect("verify.json parses")
}

#[test]
fn acceptance_suite() {
    let seed = "7";
    let out1 = tmp_dir("verify1");
    let run1 = run(&["verify", "--seed", seed, "--out", out1.to_str().unwrap()]);
    assert!(
        run1.status.success(),
        "verify failed:\n{}\n{}",
        String::from_utf8_lossy(&run1.stdout),
        String::from_utf8_lossy(&run1.stderr)
    );
    let report = read_report(&out1);
    assert_eq!(report.schema, "verify/1");
    assert_eq!(report.criteria.len(), 10, "all ten criteria must run");

    let timings = parse_timings(&String::from_utf8_lossy(&run1.stderr));
    // pinned runtime budgets (seconds)
    let budgets: BTreeMap<u32, f64> = [(1, 60.0), (3, 120.0), (5, 120.0)].into();

    let mut all = true;
    for c in &report.criteria {
        let time_note = timings
            .get(&c.id)
            .map(|s| format!(" ({s:.1}s)"))
            .unwrap_or_default();
        println!(
            "[{}] criterion {:>2} {}{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            time_note
        );
        all &= c.passed;
        if let Some(budget) = budgets.get(&c.id) {
            let secs = timings.get(&c.id).copied().unwrap_or(f64::INFINITY);
            assert!(
                secs < *budget,
                "criterion {} exceeded its runtime budget: {secs}s >= {budget}s",
                c.id
            );
        }
    }
    assert!(all && report.all_passed, "not all criteria passed");

    // spot-check some reported numbers against the pinned tolerances
    let by_id: BTreeMap<u32, &Criterion> = report.criteria.iter().map(|c| (c.id, c)).collect();
    let c1 = &by_id[&1].details;
    assert!((1.5..=3.0).contains(&c1["ratio"]), "criterion 1 ratio {}", c1["ratio"]);
    let c2 = &by_id[&2].details;
    assert_eq!(c2["simplex_violations"], 0.0);
    assert!(c2["max_bayes_w_gap"] <= 1e-12);
    assert!(c2["filter_steps"] >= 1e6);
    let c4 = &by_id[&4].details;
    assert!(c4["root_gap_rel"] <= 0.02);
    let c5 = &by_id[&5].details;
    assert!(c5["rel_err_n4"] <= 0.05 && c5["ratio"] <= 0.7);
    let c7 = &by_id[&7].details;
    assert!(c7["discrepancy_n4"] <= 0.05 && c7["ratio"] <= 0.65);
    let c8 = &by_id[&8].details;
    assert_eq!(c8["max_phi"], 0.0);
    assert!(c8["max_gap"] <= 1e-10);

    // criterion 10 at the binary level: a rerun with the same seed produces a
    // byte-identical report
    let out2 = tmp_dir("verify2");
    let run2 = run(&["verify", "--seed", seed, "--out", out2.to_str().unwrap()]);
    assert!(run2.status.success());
    let bytes1 = std::fs::read(out1.join("verify.json")).unwrap();
    let bytes2 = std::fs::read(out2.join("verify.json")).unwrap();
    assert_eq!(bytes1, bytes2, "verify reruns must be byte-identical");
    println!("[PASS] criterion 10 (binary-level): rerun report byte-identical ({} bytes)", bytes1.len());
}

#[test]
fn validate_exit_codes() {
    // shipped scenario passes with exit 0
    let dir = tmp_dir("validate-ok");
    let ok = run(&[
        "validate",
        "--config",
        scenarios_dir().join("two_regime_small.json").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(ok.status.success());
    assert!(dir.join("validation.json").exists());

    // a spec violating 1 + K1 > 0 exits with the distinct validation code 2
    // and names the constraint
    let text =
        std::fs::read_to_string(scenarios_dir().join("two_regime_small.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["model"]["coeffs"]["price_jump"][1][0] = serde_json::json!(-1.0);
    let bad_path = dir.join("bad.json");
    std::fs::write(&bad_path, serde_json::to_string(&doc).unwrap()).unwrap();
    let bad = run(&[
        "validate",
        "--config",
        bad_path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(
        stdout.contains("1 + K1 > 0 violated"),
        "failure must name the constraint:\n{stdout}"
    );

    // unparseable config is a plain nonzero error
    let garbled = dir.join("garbled.json");
    std::fs::write(&garbled, "{ not json").unwrap();
    let err = run(&["validate", "--config", garbled.to_str().unwrap()]);
    assert_eq!(err.status.code(), Some(1));
}

#[test]
fn simulate_handles_empty_ensembles_and_writes_artifacts() {
    let dir = tmp_dir("simulate");
    let text =
        std::fs::read_to_string(scenarios_dir().join("two_regime_small.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["run"]["n_paths"] = serde_json::json!(0);
    let cfg = dir.join("empty.json");
    std::fs::write(&cfg, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("ensemble.bin").exists());

    // a real run produces the path CSV as well, deterministically
    doc["run"]["n_paths"] = serde_json::json!(3);
    std::fs::write(&cfg, serde_json::to_string(&doc).unwrap()).unwrap();
    let a = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(a.status.success());
    let csv1 = std::fs::read(dir.join("path_000.csv")).unwrap();
    let b = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(b.status.success());
    let csv2 = std::fs::read(dir.join("path_000.csv")).unwrap();
    assert_eq!(csv1, csv2, "identical config and seed must give byte-identical CSV");
}

#[test]
fn filter_hedge_and_report_pipeline() {
    let dir = tmp_dir("pipeline");
    let text =
        std::fs::read_to_string(scenarios_dir().join("two_regime_small.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["run"]["n_paths"] = serde_json::json!(200);
    doc["run"]["n_steps"] = serde_json::json!(32);
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, serde_json::to_string(&doc).unwrap()).unwrap();
    let cfg_s = cfg.to_str().unwrap();
    let dir_s = dir.to_str().unwrap();

    let f = run(&["filter", "--config", cfg_s, "--out", dir_s]);
    assert!(f.status.success(), "{}", String::from_utf8_lossy(&f.stderr));
    assert!(dir.join("filter_000.csv").exists());
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("innovation_stats.json")).unwrap())
            .unwrap();
    let var = stats["variance"].as_f64().unwrap();
    assert!((0.9..=1.1).contains(&var), "innovation variance {var}");

    let h = run(&["hedge", "--config", cfg_s, "--out", dir_s]);
    assert!(h.status.success(), "{}", String::from_utf8_lossy(&h.stderr));
    assert!(dir.join("hedge.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("hedge_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["schema"], "hedge-report/1");
    assert!(summary["u0"].as_f64().unwrap() > 0.0);

    let r = run(&["report", "--out", dir_s]);
    assert!(r.status.success());
    let report = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(report.starts_with("file,series,t,value\r\n"));
    assert!(report.contains("filter_000"));
    assert!(report.contains("hedge"));
}
