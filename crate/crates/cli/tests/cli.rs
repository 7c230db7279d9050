use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparse-doa"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn sparse-doa")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run(dir, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// Small problem: 8 elements, 21-point grid, narrow network.
fn small_config(combinations: usize, epochs: usize) -> Value {
    let grid = json!({ "lo": -10.0, "hi": 10.0, "step": 1.0 });
    json!({
        "seed": 5,
        "dataset": {
            "path": "train.sdoa",
            "spec": {
                "grid": grid,
                "n_elements": 8,
                "k_max": 2,
                "snr_db": [20.0, 30.0],
                "signals_per_combination": 2,
                "combinations": combinations
            }
        },
        "encoder": {
            "n_elements": 8,
            "grid": grid,
            "signal_in_width": 64,
            "signal_widths": [64, 64],
            "conv_channels": [8, 8],
            "fusion_widths": [64, 32]
        },
        "train": { "epochs": epochs, "batch_size": 32, "lr": 0.003, "variant": "basenet1" },
        "eval": { "signals": 400, "masked_elements": 2, "snr_db": [20.0, 30.0], "omp_k_max": 2 },
        "features": { "classes": 3, "per_class": 15, "masked_elements": 2 }
    })
}

fn setup(cfg: &Value) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("cfg.json"), serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    dir
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn overall_f1(dir: &Path, json_name: &str, model: &str) -> f64 {
    let reports = read_json(dir.join(json_name));
    let r = reports
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["model"] == model)
        .unwrap_or_else(|| panic!("no report for {model}"));
    r["overall"]["f1"].as_f64().unwrap()
}

#[test]
fn exit_codes() {
    let dir = setup(&small_config(20, 1));
    let d = dir.path();
    assert_eq!(code(&run(d, &["--help"])), 0);
    assert_eq!(code(&run(d, &["--version"])), 0);
    assert_eq!(code(&run(d, &["frobnicate"])), 1);
    // no seed anywhere
    assert_eq!(code(&run(d, &["generate", "--dry-run"])), 1);
    assert_eq!(code(&run(d, &["--config", "cfg.json", "--threads", "0", "generate"])), 1);
    assert_eq!(code(&run(d, &["--config", "missing.json", "generate"])), 1);
    fs::write(d.join("bad.json"), r#"{"seed": 1, "colour": "red"}"#).unwrap();
    assert_eq!(code(&run(d, &["--config", "bad.json", "generate", "--dry-run"])), 1);
    // training before the dataset exists
    assert_eq!(code(&run(d, &["--config", "cfg.json", "train"])), 1);
    assert!(!d.join("runs").exists(), "validation failure must not create outputs");

    // an unreadable checkpoint is a runtime failure, a missing one a validation failure
    fs::write(d.join("junk.sdow"), b"not a checkpoint").unwrap();
    fs::write(d.join("junk.json"), b"{}").unwrap();
    assert_eq!(code(&run(d, &["--config", "cfg.json", "eval", "--checkpoint", "nope.sdow"])), 1);
    assert_eq!(code(&run(d, &["--config", "cfg.json", "eval", "--checkpoint", "junk.sdow"])), 2);
    // the default profile's dataset header disagrees with the small encoder
    ok(d, &["--config", "cfg.json", "generate"]);
    let o = run(d, &["--seed", "1", "train", "--dataset", "train.sdoa", "--epochs", "1"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn dry_run_reports_full_enumeration() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["--seed", "3", "generate", "--dry-run"]);
    let m: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(m["total_combinations"], 295_361);
    assert_eq!(m["planned_records"], 295_361u64 * 50);
    assert!(m["records"].is_null());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn generate_is_seeded_and_refuses_to_clobber() {
    let dir = setup(&small_config(30, 1));
    let d = dir.path();
    let first: Value = serde_json::from_str(&ok(d, &["--config", "cfg.json", "generate"])).unwrap();
    assert_eq!(first["records"], 60);
    let manifest = read_json(d.join("train.sdoa.manifest.json"));
    assert_eq!(manifest["sha256"], first["sha256"]);

    assert_eq!(code(&run(d, &["--config", "cfg.json", "generate"])), 1);
    let again: Value = serde_json::from_str(&ok(d, &["--config", "cfg.json", "--force", "generate"])).unwrap();
    assert_eq!(again["sha256"], first["sha256"]);

    let other: Value =
        serde_json::from_str(&ok(d, &["--config", "cfg.json", "--seed", "6", "--force", "generate"])).unwrap();
    assert_ne!(other["sha256"], first["sha256"]);
    assert!(!d.join("train.sdoa.partial").exists());
}

#[test]
fn variant_flags_reach_the_checkpoint() {
    let dir = setup(&small_config(20, 1));
    let d = dir.path();
    ok(d, &["--config", "cfg.json", "generate"]);
    for (v, s_max, weight) in [("basenet1", 0.0, 0.0), ("basenet2", 0.3, 0.0), ("snn", 0.3, 1.0)] {
        let ckpt = format!("{v}.sdow");
        ok(d, &["--config", "cfg.json", "train", "--variant", v, "--checkpoint", &ckpt]);
        let meta = read_json(d.join(format!("{v}.json")));
        assert_eq!(meta["variant"], v);
        assert_eq!(meta["encoder"]["max_sparsity"].as_f64(), Some(s_max), "{v}");
        assert_eq!(meta["encoder"]["contrastive_weight"].as_f64(), Some(weight), "{v}");
        let log = fs::read_to_string(d.join(format!("runs/{v}_loss.csv"))).unwrap();
        assert_eq!(log.lines().count(), 2);
        assert!(log.starts_with("epoch,total,bce,contrastive,steps"));
    }
}

#[test]
fn overfit_and_evaluation_orderings() {
    // 32 combinations x 2 signals = 64 training examples
    let dir = setup(&small_config(32, 200));
    let d = dir.path();
    ok(d, &["--config", "cfg.json", "generate"]);
    ok(d, &["--config", "cfg.json", "train", "--checkpoint", "m.sdow"]);
    let log = fs::read_to_string(d.join("runs/basenet1_loss.csv")).unwrap();
    let last = log.lines().last().unwrap();
    let fields: Vec<&str> = last.split(',').collect();
    assert_eq!(fields[0], "200");
    let bce: f64 = fields[2].parse().unwrap();
    assert!(bce < 0.05, "final bce {bce}");

    // own training set (full array) against a held-out set
    ok(d, &["--config", "cfg.json", "eval", "--checkpoint", "m.sdow", "--dataset", "train.sdoa", "--masked", "0", "--json", "own.json", "--csv", "own.csv"]);
    ok(d, &["--config", "cfg.json", "eval", "--checkpoint", "m.sdow", "--masked", "0", "--json", "held.json", "--csv", "held.csv"]);
    let own = overall_f1(d, "own.json", "m");
    let held = overall_f1(d, "held.json", "m");
    assert!(own >= held, "train-set f1 {own} < held-out f1 {held}");

    // sparsity 0 against sparsity 0.25 on the same seeded signals
    ok(d, &["--config", "cfg.json", "eval", "--checkpoint", "m.sdow", "--masked", "2", "--json", "sla.json", "--csv", "sla.csv"]);
    let sla = overall_f1(d, "sla.json", "m");
    assert!(held >= sla, "full-array f1 {held} < sparse f1 {sla}");
}

#[test]
fn eval_adds_omp_on_the_same_test_set() {
    let dir = setup(&small_config(20, 2));
    let d = dir.path();
    ok(d, &["--config", "cfg.json", "generate"]);
    ok(d, &["--config", "cfg.json", "train", "--checkpoint", "a.sdow"]);
    ok(d, &["--config", "cfg.json", "eval", "--checkpoint", "a.sdow", "--include-omp"]);
    let csv = fs::read_to_string(d.join("runs/metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("snr_lo,snr_hi,accuracy,precision,recall,f1,model,signals"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let per_model = |m: &str| -> Vec<&str> { rows.iter().filter(|r| r[6] == m).map(|r| r[7]).collect() };
    // default 6 buckets plus the overall row, with identical signal counts per bucket
    assert_eq!(per_model("a").len(), 7);
    assert_eq!(per_model("a"), per_model("cs-omp"));
    assert_eq!(per_model("a").last(), Some(&"400"));
    let json = read_json(d.join("runs/metrics.json"));
    assert_eq!(json.as_array().unwrap().len(), 2);

    // rerun is byte-identical
    let first = csv.clone();
    ok(d, &["--config", "cfg.json", "--force", "eval", "--checkpoint", "a.sdow", "--include-omp"]);
    assert_eq!(fs::read_to_string(d.join("runs/metrics.csv")).unwrap(), first);
}

#[test]
fn feature_outputs_have_one_row_per_signal() {
    let dir = setup(&small_config(20, 2));
    let d = dir.path();
    ok(d, &["--config", "cfg.json", "generate"]);
    ok(d, &["--config", "cfg.json", "train", "--checkpoint", "f.sdow"]);
    ok(d, &["--config", "cfg.json", "features", "--checkpoint", "f.sdow", "--out-dir", "feat"]);
    for cond in ["ula", "sla"] {
        let pts = fs::read_to_string(d.join(format!("feat/pca_f_{cond}.csv"))).unwrap();
        let mut lines = pts.lines();
        assert_eq!(lines.next(), Some("x,y,class_id"));
        assert_eq!(lines.count(), 3 * 15);
    }
    let t = fs::read_to_string(d.join("feat/tightness.csv")).unwrap();
    assert_eq!(t.lines().count(), 3);
    assert_eq!(code(&run(d, &["--config", "cfg.json", "features", "--checkpoint", "f.sdow", "--out-dir", "feat"])), 1);
}
