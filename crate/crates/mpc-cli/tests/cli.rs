//! End-to-end tests of the `mpc` binary: exit codes, artifacts,
//! manifests, determinism.

use std::path::Path;
use std::process::{Command, Output};

fn mpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpc"))
        .args(args)
        .output()
        .expect("spawn mpc")
}

fn tiny_train(out: &Path, extra: &[&str]) -> Output {
    let out_s = out.to_str().unwrap();
    let mut args = vec![
        "train",
        "--config",
        "blobs_mpc",
        "--set",
        "train.epochs=4",
        "--set",
        "data.per_class=60",
        "--set",
        "run.timing=off",
        "--quiet",
        "--out",
        out_s,
    ];
    args.extend_from_slice(extra);
    mpc(&args)
}

#[test]
fn train_writes_artifacts_and_manifest_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = tiny_train(&out, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["epochs.csv", "report.txt", "records.csv", "policy.txt", "manifest.txt"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let n = mpc_cli::manifest::verify_manifest(&out.join("manifest.txt")).unwrap();
    assert_eq!(n, 4);
}

#[test]
fn tampered_artifact_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(tiny_train(&out, &[]).status.success());
    std::fs::write(out.join("report.txt"), "acc = 1.0\n").unwrap();
    assert!(mpc_cli::manifest::verify_manifest(&out.join("manifest.txt")).is_err());
}

#[test]
fn identical_config_and_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(tiny_train(&a, &["--seed", "7"]).status.success());
    assert!(tiny_train(&b, &["--seed", "7"]).status.success());
    let ea = std::fs::read(a.join("epochs.csv")).unwrap();
    let eb = std::fs::read(b.join("epochs.csv")).unwrap();
    assert_eq!(ea, eb);
    assert!(!ea.is_empty());
}

#[test]
fn set_override_reaches_the_trainer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = tiny_train(
        &out,
        &["--set", "train.mode=fixed", "--set", "train.lambda=0.25", "--set", "train.alpha0=1"],
    );
    assert!(res.status.success());
    // fixed mode: no policy artifact, lambda column constant at 0.25
    assert!(!out.join("policy.txt").exists());
    let text = std::fs::read_to_string(out.join("epochs.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').nth(7).unwrap(), "0.250000");
    }
}

#[test]
fn unknown_config_key_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = tiny_train(&out, &["--set", "train.warp_speed=9"]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("warp_speed"), "stderr: {err}");
}

#[test]
fn missing_dataset_file_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = mpc(&[
        "train",
        "--config",
        "mnist_mpc",
        "--set",
        "data.train_images=no/such/file",
        "--quiet",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn unknown_preset_is_exit_3_and_lists_names() {
    let res = mpc(&["train", "--config", "nonexistent_preset", "--quiet"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("blobs_mpc"));
}

#[test]
fn divergent_run_is_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = tiny_train(
        &out,
        &[
            "--set",
            "train.optimizer=sgd",
            "--set",
            "train.inner_lr=1e308",
            "--set",
            "train.mode=fixed",
        ],
    );
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn existing_run_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(tiny_train(&out, &[]).status.success());
    let res = tiny_train(&out, &[]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn sweep_writes_summary_and_refuses_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let args = [
        "sweep",
        "--config",
        "blobs4_fixed",
        "--set",
        "train.epochs=3",
        "--set",
        "data.per_class=60",
        "--set",
        "sweep.lambda_values=0.1,1",
        "--set",
        "run.timing=off",
        "--quiet",
        "--out",
        out.to_str().unwrap(),
    ];
    let res = mpc(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(out.join("lambda_0.1").join("epochs.csv").exists());
    assert!(out.join("lambda_1").join("epochs.csv").exists());
    // second invocation must refuse the populated directory
    assert_eq!(mpc(&args).status.code(), Some(3));
}

#[test]
fn regret_summary_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rg");
    let res = mpc(&[
        "regret",
        "--config",
        "regret_quadratic",
        "--set",
        "regret.t_values=50,200",
        "--quiet",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    for line in summary.lines().skip(1) {
        assert!(line.ends_with(",pass"), "line: {line}");
    }
    assert!(out.join("trace_50.csv").exists());
    let trace = std::fs::read_to_string(out.join("trace_50.csv")).unwrap();
    assert_eq!(trace.lines().count(), 51);
}

#[test]
fn regret_replay_is_not_applicable() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("grads.csv");
    std::fs::write(&replay, "0.5,-0.2\n-0.1,0.3\n0.2,0.2\n").unwrap();
    let cfgf = dir.path().join("replay.cfg");
    std::fs::write(
        &cfgf,
        format!("[regret]\nfamily = replay\nreplay_file = {}\n", replay.display()),
    )
    .unwrap();
    let out = dir.path().join("rg");
    let res = mpc(&[
        "regret",
        "--config",
        cfgf.to_str().unwrap(),
        "--quiet",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("not applicable"));
}

#[test]
fn gen_data_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gen_out = dir.path().join("gen");
    let res = mpc(&[
        "gen-data",
        "--config",
        "blobs_mpc",
        "--set",
        "data.per_class=50",
        "--quiet",
        "--out",
        gen_out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(gen_out.join("train.csv").exists());
    assert!(gen_out.join("val.csv").exists());

    // eval on a training run's records reproduces the run's report
    let run_out = dir.path().join("run");
    assert!(tiny_train(&run_out, &[]).status.success());
    let report = dir.path().join("eval_report.txt");
    let res = mpc(&[
        "eval",
        run_out.join("records.csv").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let from_eval = std::fs::read_to_string(&report).unwrap();
    let from_train = std::fs::read_to_string(run_out.join("report.txt")).unwrap();
    assert_eq!(from_eval, from_train);
}

#[test]
fn eval_missing_file_is_exit_3() {
    let res = mpc(&["eval", "/no/such/records.csv", "--quiet"]);
    assert_eq!(res.status.code(), Some(3));
}
