use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn symrl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symrl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SYMRL_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, file: &str, body: &str) -> String {
    let path = dir.join(file);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_config(name: &str, algorithm: &str, seeds: &str) -> String {
    format!(
        r#"
name = "{name}"
env = "gridworld"
seeds = {seeds}

[noise]
kind = "bsc"
p = 0.1

[trainer]
algorithm = "{algorithm}"
n_steps = 16
minibatch_size = 32
epochs = 2
updates = 10

[evaluation]
interval = 5
episodes = 4
"#
    )
}

#[test]
fn run_writes_one_metrics_file_per_seed_and_a_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sppo.toml", &small_config("sppo", "sppo", "[1, 2, 3, 4, 5]"));
    let out = symrl(&["run", &cfg, "--quiet", "--output-dir", "out"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> =
        fs::read_dir(tmp.path().join("out")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(
        names,
        [
            "metrics_seed1.jsonl",
            "metrics_seed2.jsonl",
            "metrics_seed3.jsonl",
            "metrics_seed4.jsonl",
            "metrics_seed5.jsonl",
            "summary.json"
        ]
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["per_seed"].as_array().unwrap().len(), 5);
    assert_eq!(summary["trainer"]["loss"]["beta"], 10.0);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "ppo.toml", &small_config("ppo", "ppo", "[7]"));
    for dir in ["a", "b"] {
        let out = symrl(&["run", &cfg, "--quiet", "--output-dir", dir], tmp.path());
        assert!(out.status.success());
    }
    let a = fs::read(tmp.path().join("a/metrics_seed7.jsonl")).unwrap();
    let b = fs::read(tmp.path().join("b/metrics_seed7.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn unknown_environment_is_rejected_without_writing() {
    let tmp = TempDir::new().unwrap();
    let body = small_config("bad", "ppo", "[1]").replace("env = \"gridworld\"", "env = \"atari\"");
    let cfg = write_config(tmp.path(), "bad.toml", &body);
    let out = symrl(&["run", &cfg, "--output-dir", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown environment"));
    assert!(!tmp.path().join("out").exists());
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn malformed_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg =
        write_config(tmp.path(), "bad.toml", "name = \"x\"\nenv = \"gridworld\"\nseeds = [1]\nlearning_rate = 3\n");
    assert_eq!(symrl(&["run", &cfg], tmp.path()).status.code(), Some(2));
    assert_eq!(symrl(&["run", "missing.toml"], tmp.path()).status.code(), Some(2));
}

#[test]
fn output_directory_defaults_and_environment_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &small_config("named", "ppo", "[1]"));
    let out = Command::new(env!("CARGO_BIN_EXE_symrl"))
        .args(["run", &cfg, "--quiet"])
        .current_dir(tmp.path())
        .env("SYMRL_OUTPUT_DIR", "elsewhere")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("elsewhere/named/summary.json").exists());

    assert!(symrl(&["run", &cfg, "--quiet", "--seed-override", "4"], tmp.path()).status.success());
    assert!(tmp.path().join("runs/named/metrics_seed4.jsonl").exists());
    assert!(!tmp.path().join("runs/named/metrics_seed1.jsonl").exists());
}

#[test]
fn debug_gradient_probe_run_succeeds() {
    let tmp = TempDir::new().unwrap();
    let body = small_config("probe", "sppo", "[2]").replace("updates = 10", "updates = 2");
    let cfg = write_config(tmp.path(), "p.toml", &body);
    let out = symrl(&["run", &cfg, "--quiet", "--debug-gradient-probe", "--output-dir", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_reports_and_rejects_mismatches() {
    let tmp = TempDir::new().unwrap();
    let a = write_config(tmp.path(), "a.toml", &small_config("a", "sppo", "[1, 2]"));
    let b = write_config(tmp.path(), "b.toml", &small_config("b", "ppo", "[1, 2]"));
    let c = write_config(tmp.path(), "c.toml", &small_config("c", "ppo", "[1, 3]"));
    for (cfg, dir) in [(&a, "a"), (&b, "b"), (&c, "c")] {
        assert!(symrl(&["run", cfg, "--quiet", "--output-dir", dir], tmp.path()).status.success());
    }

    let out = symrl(&["compare", "a/summary.json", "a/summary.json", "--json"], tmp.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "tie");
    assert_eq!(report["mean_difference"], 0.0);

    let out = symrl(&["compare", "a/summary.json", "b/summary.json"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("mean difference") && text.contains("verdict"));

    let out = symrl(&["compare", "a/summary.json", "c/summary.json"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_suites() {
    let tmp = TempDir::new().unwrap();
    for suite in ["gradients", "losses", "advantage", "noise"] {
        let out = symrl(&["verify", suite], tmp.path());
        assert!(out.status.success(), "{suite}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.lines().count() >= 2 && text.lines().all(|l| l.contains("PASS")), "{text}");
    }
    let out = symrl(&["verify", "gradients"], tmp.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("1000 cases"));
    assert_eq!(symrl(&["verify", "everything"], tmp.path()).status.code(), Some(2));
}

#[test]
fn export_csv_writes_next_to_the_metrics() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &small_config("csv", "ppo", "[5]"));
    assert!(symrl(&["run", &cfg, "--quiet", "--output-dir", "o"], tmp.path()).status.success());
    let out = symrl(&["export-csv", "o/metrics_seed5.jsonl"], tmp.path());
    assert!(out.status.success());
    let text = fs::read_to_string(tmp.path().join("o/metrics_seed5.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("update,env_steps,mean_return_clean,loss_forward,loss_reverse,loss_value,entropy,adv_sign_flip_rate,clipped_fraction,grad_norm,seconds"));
    assert_eq!(text.lines().count(), 11);
}
