//! End-to-end tests of the command-line interface.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contract-design"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        r#"
seeds = [7]

[gdm]
epochs = 2
states_per_epoch = 16
batch_size = 16
eval_states = 4
t_steps = 10
actor_lr = 1e-4
critic_lr = 1e-4

[ppo]
epochs = 2
states_per_epoch = 16
eval_states = 4
policy_lr = 1e-4
value_lr = 1e-4
"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_oracle_prints_the_analytic_optimum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["solve-oracle", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let solution: serde_json::Value = serde_json::from_str(&text).unwrap();
    let items = solution["contract"]["items"].as_array().unwrap();
    assert_eq!(items.len(), 2);
    for item in items {
        let latency = 1.0 / item["inv_latency"].as_f64().unwrap();
        assert!((latency - 47.43416).abs() < 1e-3, "latency {latency}");
        assert!((item["reward"].as_f64().unwrap() - 2.16228).abs() < 1e-5);
    }
    assert!(tmp.path().join("oracle.json").exists());
    assert!(tmp.path().join("oracle.manifest.json").exists());
}

#[test]
fn compare_without_training_runs_exits_2_with_missing_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["compare", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("missing checkpoint"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(&["solve-oracle", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "seeds = []\n").unwrap();
    let out = run(&["solve-oracle", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sample_states_emits_valid_deterministic_jsonl() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().to_str().unwrap();
    let first = run(&["sample-states", "--count", "5", "--out", out_dir, "--seed", "3"]);
    assert!(first.status.success());
    let body1 = std::fs::read(tmp.path().join("states.jsonl")).unwrap();
    for line in String::from_utf8(body1.clone()).unwrap().lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["seed"].as_u64(), Some(3));
        assert!(record["draw"].as_u64().unwrap() >= 1 << 63, "held-out stream draw");
        let state: contract_design::econ::MarketState =
            serde_json::from_value(record["state"].clone()).unwrap();
        state.validate().unwrap();
    }
    let second = run(&["sample-states", "--count", "5", "--out", out_dir, "--seed", "3"]);
    assert!(second.status.success());
    let body2 = std::fs::read(tmp.path().join("states.jsonl")).unwrap();
    assert_eq!(body1, body2);
}

#[test]
fn train_compare_report_pipeline_produces_expected_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().to_str().unwrap();
    let config = small_config(tmp.path());

    let gdm = run(&["train-gdm", "--config", &config, "--out", out_dir]);
    assert!(gdm.status.success(), "stderr: {}", String::from_utf8_lossy(&gdm.stderr));
    let ppo = run(&["train-ppo", "--config", &config, "--out", out_dir]);
    assert!(ppo.status.success(), "stderr: {}", String::from_utf8_lossy(&ppo.stderr));

    for method in ["gdm", "ppo"] {
        let dir = tmp.path().join(method).join("seed-7");
        let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
        assert!(trace.starts_with("epoch,test_reward,critic_loss,actor_obj,wall_ms\n"));
        assert_eq!(trace.lines().count(), 3, "header plus two epochs");
        assert!(dir.join("checkpoint.json").exists());
        assert!(dir.join("manifest.json").exists());
    }

    let report = run(&["report", "--config", &config, "--out", out_dir]);
    assert!(report.status.success(), "stderr: {}", String::from_utf8_lossy(&report.stderr));
    let report_dir = tmp.path().join("report");
    let curves = std::fs::read_to_string(report_dir.join("curves.csv")).unwrap();
    assert!(curves.starts_with("epoch,gdm_reward,ppo_reward,oracle_reward\n"));
    assert!(report_dir.join("curves.svg").exists());
    assert!(report_dir.join("report.md").exists());
    assert!(report_dir.join("contracts.json").exists());

    let comparison: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("comparison.json")).unwrap())
            .unwrap();
    for method in ["oracle", "gdm", "ppo"] {
        assert_eq!(
            comparison[method]["feasibility_rate"].as_f64(),
            Some(1.0),
            "{method} feasibility"
        );
    }
}

#[test]
fn training_runs_are_byte_identical_under_fixed_seed() {
    let tmp_a = tempfile::tempdir().unwrap();
    let tmp_b = tempfile::tempdir().unwrap();
    let config = small_config(tmp_a.path());

    for dir in [&tmp_a, &tmp_b] {
        let out = run(&["train-gdm", "--config", &config, "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["trace.csv", "checkpoint.json", "manifest.json"] {
        let a = std::fs::read(tmp_a.path().join("gdm/seed-7").join(file)).unwrap();
        let b = std::fs::read(tmp_b.path().join("gdm/seed-7").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
    }
}

#[test]
fn report_refuses_on_eval_state_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().to_str().unwrap();
    let config = small_config(tmp.path());

    let gdm = run(&["train-gdm", "--config", &config, "--out", out_dir]);
    assert!(gdm.status.success());
    let ppo = run(&["train-ppo", "--config", &config, "--out", out_dir]);
    assert!(ppo.status.success());

    // Same artifacts, different sampler seed: the held-out set changes and
    // the comparison must refuse with both hashes in the message.
    let mismatched = std::fs::read_to_string(tmp.path().join("config.toml"))
        .unwrap()
        .replace("seeds = [7]", "seeds = [7]\n\n[sampler]\nseed = 8");
    let bad_path = tmp.path().join("mismatch.toml");
    std::fs::write(&bad_path, mismatched).unwrap();

    let out = bin()
        .args(["compare", "--config", bad_path.to_str().unwrap(), "--out", out_dir])
        .output()
        .unwrap();
    // for_seed overwrites sampler.seed with the run seed, so force the
    // mismatch through the eval count instead.
    let _ = out;
    let smaller_eval = std::fs::read_to_string(tmp.path().join("config.toml"))
        .unwrap()
        .replace("eval_states = 4", "eval_states = 3");
    std::fs::write(&bad_path, smaller_eval).unwrap();
    let out = bin()
        .args(["compare", "--config", bad_path.to_str().unwrap(), "--out", out_dir])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("eval-state mismatch"), "stderr: {stderr}");
    assert!(stderr.contains("config yields"), "stderr: {stderr}");
}
