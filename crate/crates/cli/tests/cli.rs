use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const TINY: &str = r#"
[dataset]
split = [4, 3, 3]

[dataset.phantom]
n_patients = 10
size = 32
depth = 4

[task]
kind = "csi"
n_pool = 3
n_per_mixture = 2
m_mixtures = 2

[model]
depth = 1
base_width = 4

[training]
epochs_max = 1
iterations_per_epoch = 2
val_samples = 2
early_stop_patience = 1

[eval]
lambdas = [0.1, 0.9]
test_samples = 2
ablation_settings = [[3, 2]]
overlap_pairs = 20
overlap_bins = 4
"#;

fn srcid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srcid")).args(args).output().unwrap()
}

fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, format!("{TINY}\n{extra}")).unwrap();
    path
}

fn stdout_path(out: &Output) -> PathBuf {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn dir_digest(dir: &Path) -> String {
    let mut names: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(&p).unwrap());
    }
    format!("{:x}", h.finalize())
}

#[test]
fn phantom_generation_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "");
    let out = tmp.path().join("runs");
    let args = ["generate-phantom", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5"];
    let a = stdout_path(&srcid(&args));
    let b = stdout_path(&srcid(&args));
    assert_ne!(a, b, "each invocation gets its own run directory");
    assert_eq!(dir_digest(&a), dir_digest(&b));
    let resolved = fs::read_to_string(a.parent().unwrap().join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 5"), "{resolved}");
}

#[test]
fn invalid_lesion_params_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "[dataset.phantom.lesion]\nradius = [0.2, 0.1]\n");
    let out = srcid(&["generate-phantom", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lesion.radius"));
}

#[test]
fn bad_pool_size_fails_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "").to_str().unwrap().to_string();
    let text = fs::read_to_string(&cfg).unwrap().replace("n_pool = 3", "n_pool = 4");
    fs::write(&cfg, text).unwrap();
    let runs = tmp.path().join("runs");
    let out = srcid(&["pretrain", "--config", &cfg, "--out", runs.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!runs.exists());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = srcid(&["pretrain", "--config", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pretrain_finetune_evaluate_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    let runs = tmp.path().join("runs");
    let o = runs.to_str().unwrap();

    let ckpt = stdout_path(&srcid(&["pretrain", "--config", c, "--out", o]));
    assert!(ckpt.exists());
    assert!(ckpt.parent().unwrap().join("record.csv").exists());

    let tuned = stdout_path(&srcid(&[
        "finetune", "--config", c, "--out", o, "--checkpoint", ckpt.to_str().unwrap(), "--labeled-budget", "2", "--mixup",
    ]));
    let resolved = fs::read_to_string(tuned.parent().unwrap().join("config.toml")).unwrap();
    assert!(resolved.contains("labeled_budget = 2") && resolved.contains("mixup = true"), "{resolved}");
    let baseline = stdout_path(&srcid(&["finetune", "--config", c, "--out", o]));

    let report = stdout_path(&srcid(&["evaluate", "--config", c, "--out", o, "--checkpoint", tuned.to_str().unwrap()]));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(json["config_hash"].is_string());
    assert_eq!(json["class_names"], serde_json::json!(["brain", "lesion", "All"]));
    let other = stdout_path(&srcid(&["evaluate", "--config", c, "--out", o, "--checkpoint", baseline.to_str().unwrap()]));

    let same = stdout_path(&srcid(&["compare", report.to_str().unwrap(), report.to_str().unwrap(), "--out", o]));
    let cmp: serde_json::Value = serde_json::from_str(&fs::read_to_string(same).unwrap()).unwrap();
    for t in cmp["tests"].as_array().unwrap() {
        assert_eq!(t["p"], 1.0);
        assert_eq!(t["degenerate"], true);
    }
    stdout_path(&srcid(&["compare", report.to_str().unwrap(), other.to_str().unwrap(), "--out", o]));

    // a proxy checkpoint cannot be scored
    let bad = srcid(&["evaluate", "--config", c, "--out", o, "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn diagnostic_commands_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    let o = tmp.path().join("runs");
    let o = o.to_str().unwrap();

    let solv = stdout_path(&srcid(&["solvability", "--config", c, "--out", o]));
    let dir = solv.parent().unwrap();
    assert!(dir.join("solvability.csv").exists());
    assert!(dir.join("panel_lambda_0.9.png").exists());

    let abl = stdout_path(&srcid(&["ablate-sources", "--config", c, "--out", o]));
    let csv = fs::read_to_string(abl.parent().unwrap().join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let ov = stdout_path(&srcid(&["overlap-stats", "--config", c, "--out", o]));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(ov).unwrap()).unwrap();
    let total: u64 = json["counts"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total + json["zero_count"].as_u64().unwrap(), 20);
}

#[test]
fn phantom_directory_can_be_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "");
    let o = tmp.path().join("runs");
    let data = stdout_path(&srcid(&["generate-phantom", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]));
    let with_path = tiny_config(tmp.path(), "");
    let text = fs::read_to_string(&with_path)
        .unwrap()
        .replacen("[dataset]\n", &format!("[dataset]\npath = {:?}\nimage_size = [32, 32]\n", data.to_str().unwrap()), 1);
    fs::write(&with_path, text).unwrap();
    stdout_path(&srcid(&["overlap-stats", "--config", with_path.to_str().unwrap(), "--out", o.to_str().unwrap()]));
}
