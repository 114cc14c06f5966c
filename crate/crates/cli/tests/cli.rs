use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn texdcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texdcn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> Output {
    let o = texdcn(args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn text(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&texdcn(&["--help"])), 0);
    for sub in ["phantom", "extract", "train", "signature", "link", "gradcheck"] {
        let o = texdcn(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
    assert_eq!(code(&texdcn(&["phantom", "--bogus"])), 2);
    assert_eq!(code(&texdcn(&[])), 2);
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&texdcn(&["--out", out, "phantom", "--n", "0"])), 2);
    assert_eq!(code(&texdcn(&["--out", out, "extract", "--n", "0"])), 2);
}

#[test]
fn config_keys_are_checked_and_echoed() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"lamda": 0.1}"#).unwrap();
    let out = dir.path().join("o");
    let o = texdcn(&["--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap(), "phantom", "--n", "1"]);
    assert_eq!(code(&o), 2);

    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"n_cases": 2, "lambda": 0.2}"#).unwrap();
    ok(&["--config", good.to_str().unwrap(), "--seed", "3", "--out", out.to_str().unwrap(), "phantom"]);
    let echoed: serde_json::Value = serde_json::from_str(&text(out.join("config.json"))).unwrap();
    assert_eq!(echoed["n_cases"], 2);
    assert_eq!(echoed["lambda"], 0.2);
    assert_eq!(echoed["seed"], 3);
    assert_eq!(echoed["n_patches"], 50_000);
    assert_eq!(text(out.join("manifest.csv")).lines().count(), 3);
}

#[test]
fn phantom_into_unwritable_location_fails() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("file");
    std::fs::write(&file, "x").unwrap();
    let out = file.join("sub");
    assert_eq!(code(&texdcn(&["--out", out.to_str().unwrap(), "phantom", "--n", "1"])), 1);
}

#[test]
fn link_rejects_single_class_cohort() {
    let dir = TempDir::new().unwrap();
    let sig = dir.path().join("signatures.csv");
    std::fs::write(
        &sig,
        "case_id,grade,window_count,c1,c2\na,0,4,0.5,0.5\nb,1,4,0.25,0.75\nc,0,4,1,0\nd,1,4,0,1\n",
    )
    .unwrap();
    let o = texdcn(&["--out", dir.path().to_str().unwrap(), "link", "--task", "binary_forest"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn pipeline_end_to_end() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (a_s, b_s) = (a.to_str().unwrap(), b.to_str().unwrap());

    let o = ok(&["--seed", "7", "--out", a_s, "phantom", "--n", "8"]);
    assert!(String::from_utf8_lossy(&o.stdout).trim().ends_with("manifest.csv"));
    ok(&["--seed", "7", "--out", b_s, "phantom", "--n", "8"]);
    assert_eq!(text(a.join("manifest.csv")).lines().count(), 9);
    for f in ["case_003.f32", "case_003_mask.u8", "truth_case_003.u8", "phantom_truth.csv"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }

    ok(&["--seed", "7", "--out", a_s, "extract", "--n", "40"]);
    ok(&["--seed", "7", "--out", b_s, "extract", "--n", "40"]);
    assert_eq!(read(a.join("patches.bin")), read(b.join("patches.bin")));

    let train = [
        "--seed", "7", "--out", a_s, "train", "--k", "3", "--pretrain-epochs", "1", "--joint-epochs", "1", "--batch-size",
        "16",
    ];
    ok(&train);
    let summary: serde_json::Value = serde_json::from_str(&text(a.join("train_summary.json"))).unwrap();
    assert_eq!(summary["k"], 3);
    assert_eq!(summary["param_count"], 29_231);
    assert_eq!(summary["patches"], 40);
    assert_eq!(text(a.join("joint_log.csv")).lines().count(), 2);

    // resuming without further epochs reproduces the saved model's loss
    let resumed = dir.path().join("resumed");
    std::fs::create_dir_all(&resumed).unwrap();
    std::fs::copy(a.join("patches.bin"), resumed.join("patches.bin")).unwrap();
    let ckpt = a.join("model.ckpt");
    ok(&[
        "--seed", "7", "--out", resumed.to_str().unwrap(), "train", "--k", "3", "--joint-epochs", "0",
        "--resume", ckpt.to_str().unwrap(),
    ]);
    let again: serde_json::Value = serde_json::from_str(&text(resumed.join("train_summary.json"))).unwrap();
    for key in ["recon", "cluster", "total"] {
        assert_eq!(summary[key], again[key], "{key}");
    }
    assert_eq!(read(ckpt), read(resumed.join("model.ckpt")));

    ok(&["--seed", "7", "--out", a_s, "signature"]);
    let first = text(a.join("signatures.csv"));
    ok(&["--seed", "7", "--out", a_s, "signature"]);
    assert_eq!(first, text(a.join("signatures.csv")));
    let rows: Vec<&str> = first.lines().collect();
    assert_eq!(rows[0], "case_id,grade,window_count,c1,c2,c3");
    assert_eq!(rows.len(), 9);
    for row in &rows[1..] {
        let sum: f64 = row.split(',').skip(3).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "{row}");
    }
    assert!(text(a.join("labelmaps.csv")).starts_with("case_id,slice,cx_px,cy_px,cluster\n"));

    ok(&["--seed", "7", "--out", a_s, "link", "--n-trees", "20"]);
    let metrics: serde_json::Value = serde_json::from_str(&text(a.join("metrics.json"))).unwrap();
    let keys: Vec<&String> = metrics["metrics"].as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 4);
    for k in ["accuracy", "sensitivity", "specificity", "f1"] {
        assert!(metrics["metrics"][k].is_number(), "{k}");
    }
    let imp = text(a.join("importance.csv"));
    assert_eq!(imp.lines().next(), Some("cluster,mean,sd,top4_freq"));
    assert_eq!(imp.lines().count(), 4);
    assert!(text(a.join("importance.svg")).starts_with("<svg"));
    let first_metrics = text(a.join("metrics.json"));
    ok(&["--seed", "7", "--out", a_s, "link", "--n-trees", "20"]);
    assert_eq!(first_metrics, text(a.join("metrics.json")));

    let lasso = dir.path().join("lasso");
    std::fs::create_dir_all(&lasso).unwrap();
    std::fs::copy(a.join("signatures.csv"), lasso.join("signatures.csv")).unwrap();
    ok(&["--out", lasso.to_str().unwrap(), "link", "--task", "grade_lasso"]);
    let reg = text(lasso.join("regression.csv"));
    assert_eq!(reg.lines().next(), Some("case_id,true_grade,predicted"));
    assert_eq!(reg.lines().count(), 9);
    assert!(!lasso.join("importance.csv").exists());
    assert!(text(lasso.join("regression.svg")).contains("<circle"));
}

#[test]
fn gradcheck_passes() {
    let o = ok(&["gradcheck", "--seeds", "1"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().count() > 5);
    assert!(out.lines().all(|l| l.starts_with("PASS")));
}
