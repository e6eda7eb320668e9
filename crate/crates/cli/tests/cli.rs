use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scam-radar"));
    c.env_remove("SCAM_RADAR_SEED").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert_eq!(
        code(&out),
        0,
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_market(dir: &Path, seed: &str) {
    ok(&["--seed", seed, "generate", "--small", "--out", p(dir)]);
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn generate_is_deterministic_per_seed() {
    let t = TempDir::new().unwrap();
    let (a, b, c) = (t.path().join("a"), t.path().join("b"), t.path().join("c"));
    small_market(&a, "11");
    small_market(&b, "11");
    small_market(&c, "12");
    let ta = read_tree(&a);
    assert!(ta.contains_key("events.jsonl") && ta.contains_key("ledger.json"));
    assert_eq!(ta, read_tree(&b));
    assert_ne!(ta, read_tree(&c));
}

#[test]
fn seed_comes_from_environment_when_no_flag() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    small_market(&a, "5");
    let out = bin()
        .env("SCAM_RADAR_SEED", "5")
        .args(["generate", "--small", "--out", p(&b)])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(read_tree(&a), read_tree(&b));
    let bad = bin()
        .env("SCAM_RADAR_SEED", "five")
        .args(["generate", "--small", "--out", p(&b)])
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn campaign_counts_are_honoured() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    ok(&["generate", "--small", "--campaigns", "rugpull=5,collusion=3", "--out", p(&d)]);
    let ledger: serde_json::Value = serde_json::from_slice(&fs::read(d.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["pools"].as_array().unwrap().len(), 8);
}

#[test]
fn infeasible_generator_settings_exit_2() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    let out = run(&["generate", "--small", "--campaigns", "pump=1", "--victims", "0", "--out", p(&d)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("victim"));
    assert_eq!(code(&run(&["generate", "--campaigns", "bogus=1", "--out", p(&d)])), 2);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    small_market(&d, "1");
    let x = t.path().join("x.json");
    assert_eq!(code(&run(&["eval", "--data", p(&d), "--out", p(&x), "--folds", "1"])), 2);
    let cfg = t.path().join("c.toml");
    fs::write(&cfg, "unknown_key = 3\n").unwrap();
    assert_eq!(code(&run(&["--config", p(&cfg), "ingest-check", "--data", p(&d)])), 2);
    fs::write(&cfg, "[thresholds]\ndrain_fraction = 0.0\n").unwrap();
    let o = t.path().join("o");
    assert_eq!(code(&run(&["--config", p(&cfg), "detect", "--data", p(&d), "--out", p(&o)])), 2);
    assert_eq!(code(&run(&["ingest-check"])), 2);
}

#[test]
fn config_file_supplies_paths_and_seed() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    small_market(&a, "8");
    let cfg = t.path().join("c.toml");
    fs::write(&cfg, format!("seed = 8\nout = {:?}\n", p(&b))).unwrap();
    ok(&["--config", p(&cfg), "generate", "--small"]);
    assert_eq!(read_tree(&a), read_tree(&b));
}

#[test]
fn missing_prices_exit_1() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    small_market(&d, "2");
    fs::remove_file(d.join("prices.csv")).unwrap();
    let out = run(&["ingest-check", "--data", p(&d)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("prices.csv"));
    let o = t.path().join("o");
    assert_eq!(code(&run(&["detect", "--data", p(&d), "--out", p(&o)])), 1);
}

#[test]
fn malformed_rows_are_reported_and_exit_1() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    small_market(&d, "2");
    let mut text = fs::read_to_string(d.join("tokens.csv")).unwrap();
    text.push_str("not-an-address,X,X,18,0x0000000000000000000000000000000000000001,0\n");
    fs::write(d.join("tokens.csv"), text).unwrap();
    let out = run(&["ingest-check", "--data", p(&d)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rejected"));
}

#[test]
fn empty_event_log_is_not_an_error() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    small_market(&d, "3");
    fs::write(d.join("events.jsonl"), "").unwrap();
    fs::write(d.join("transfers.jsonl"), "").unwrap();
    ok(&["ingest-check", "--data", p(&d)]);
    let o = t.path().join("o");
    ok(&["detect", "--data", p(&d), "--out", p(&o)]);
    assert!(o.join("impact_report.json").exists());
}

#[test]
fn features_has_one_row_per_token() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    small_market(&d, "4");
    let f = t.path().join("f.csv");
    ok(&["features", "--data", p(&d), "--out", p(&f)]);
    let tokens = fs::read_to_string(d.join("tokens.csv")).unwrap().lines().count();
    let rows = fs::read_to_string(&f).unwrap().lines().count();
    assert_eq!(rows, tokens);
}

#[test]
fn train_and_eval_write_json() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    small_market(&d, "6");
    let m = t.path().join("m.json");
    ok(&["train", "--data", p(&d), "--out", p(&m), "--trees", "7"]);
    let model: serde_json::Value = serde_json::from_slice(&fs::read(&m).unwrap()).unwrap();
    assert_eq!(model["trees"].as_array().unwrap().len(), 7);
    let e = t.path().join("e.json");
    ok(&["eval", "--data", p(&d), "--out", p(&e), "--folds", "3", "--baseline", "--labels", "seed"]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&e).unwrap()).unwrap();
    assert_eq!(report["label_source"], "seed");
    assert_eq!(report["forest"]["folds"].as_array().unwrap().len(), 3);
    assert!(report["logistic_baseline"].is_object());
}

#[test]
fn detect_is_byte_identical_across_runs_and_thread_counts() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    small_market(&d, "9");
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["--seed", "3", "detect", "--data", p(&d), "--out", p(&a)]);
    ok(&["--seed", "3", "--jobs", "2", "detect", "--data", p(&d), "--out", p(&b)]);
    let ta = read_tree(&a);
    assert!(ta.contains_key("labels_out.csv") && ta.contains_key("detect_summary.json"));
    assert_eq!(ta, read_tree(&b));
}

#[test]
fn report_reproduces_detect_impact() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    small_market(&d, "10");
    let a = t.path().join("a");
    ok(&["detect", "--data", p(&d), "--out", p(&a)]);
    let r = t.path().join("r");
    let out = ok(&[
        "report",
        "--data",
        p(&d),
        "--labels",
        p(&a.join("labels_out.csv")),
        "--out",
        p(&r),
    ]);
    assert_eq!(
        fs::read(a.join("impact_report.json")).unwrap(),
        fs::read(r.join("impact_report.json")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("rug_histogram.csv")).unwrap(),
        fs::read(r.join("rug_histogram.csv")).unwrap()
    );
    assert!(r.join("truth_comparison.json").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("10920") && stdout.contains("39762"));
}

#[test]
fn eval_on_default_benchmark_clears_f1_gate() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    ok(&["--seed", "42", "generate", "--out", p(&d)]);
    let e = t.path().join("eval_report.json");
    ok(&["--seed", "7", "eval", "--data", p(&d), "--out", p(&e), "--folds", "10"]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&e).unwrap()).unwrap();
    assert_eq!(report["label_source"], "truth");
    let f1 = report["forest"]["aggregate"]["f1"].as_f64().unwrap();
    assert!(f1 >= 0.90, "F1 {f1}");
}
