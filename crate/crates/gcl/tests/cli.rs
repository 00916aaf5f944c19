//! End-to-end CLI checks through the compiled binary: exit codes, file
//! outputs, and a miniature train/eval/emit-plots pipeline.

use std::path::Path;
use std::process::{Command, Output};

fn gcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const TINY_CONFIG: &str = "\
run.iterations = 3
run.episodes_per_task = 2
tasks.count = 8
tasks.width = 10
tasks.height = 10
nav.max_steps = 40
vae.epochs = 5
vae.hidden = 32
";

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert_code(&gcl(&["--help"]), 0);
    assert_code(&gcl(&["--version"]), 0);
    assert_code(&gcl(&["train", "--help"]), 0);
}

#[test]
fn unknown_subcommand_and_flag_exit_one() {
    assert_code(&gcl(&["frobnicate"]), 1);
    assert_code(&gcl(&["train", "--bogus-flag"]), 1);
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "run.bogus = 1\n").unwrap();
    let out = gcl(&["train", "--config", path.to_str().unwrap()]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.bogus"));
}

#[test]
fn bad_mode_exits_one_and_lists_modes() {
    let out = gcl(&["train", "--mode", "nope"]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("base_rl"));
}

#[test]
fn missing_runtime_input_exits_two() {
    let out = gcl(&["emit-plots", "--log", "/nonexistent/log.csv", "--out", "/tmp"]);
    assert_code(&out, 2);
    let out = gcl(&["eval", "--checkpoint", "/nonexistent/c.bin"]);
    assert_code(&out, 2);
}

#[test]
fn gen_tasks_writes_a_loadable_pool() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("tasks");
    let cfg = write_config(dir.path());
    let out = gcl(&[
        "gen-tasks",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--count",
        "5",
        "--seed",
        "9",
    ]);
    assert_code(&out, 0);
    assert!(out_dir.join("manifest.txt").exists());
    let set = gcl::taskgen::load_tasks(&out_dir).unwrap();
    assert_eq!(set.tasks.len(), 5);
}

#[test]
fn full_pipeline_train_eval_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run_dir = dir.path().join("run");
    let out = gcl(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "gcl",
        "--seed",
        "4",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let log = run_dir.join("log.csv");
    assert!(log.exists());
    let ckpt = run_dir.join("ckpt_000003.bin");
    assert!(ckpt.exists());

    let results = dir.path().join("eval.csv");
    let out = gcl(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(results.exists());

    let plots = dir.path().join("plots");
    let out = gcl(&[
        "emit-plots",
        "--log",
        log.to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(plots.join("difficulty.csv").exists());
    assert!(plots.join("returns.csv").exists());
}

#[test]
fn train_vae_reports_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let weights = dir.path().join("vae.bin");
    let out = gcl(&[
        "train-vae",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "6",
        "--out",
        weights.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));
    let ckpt = gcl::checkpoint::load(&weights).unwrap();
    assert!(ckpt.block("vae.encoder").is_some());
    assert!(ckpt.block("vae.decoder").is_some());
}

#[test]
fn resume_from_checkpoint_continues_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run_dir = dir.path().join("run");
    let out = gcl(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "base_rl",
        "--seed",
        "4",
        "--iterations",
        "2",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let ckpt = run_dir.join("ckpt_000002.bin");
    assert!(ckpt.exists());
    let resumed_dir = dir.path().join("resumed");
    let out = gcl(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "base_rl",
        "--seed",
        "4",
        "--iterations",
        "4",
        "--resume",
        ckpt.to_str().unwrap(),
        "--out",
        resumed_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let log = gcl::curriculum::TrainingLog::load(&resumed_dir.join("log.csv")).unwrap();
    assert_eq!(log.rows.len(), 2);
    assert_eq!(log.rows[0].iteration, 2);
}