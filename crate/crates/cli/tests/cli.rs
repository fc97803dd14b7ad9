use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn a2c(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a2c"))
        .args(args)
        .env_remove("A2C_CHAT_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = a2c(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a small synthetic dataset and a config pointing at it.
fn workspace(dir: &Path) -> PathBuf {
    let data = dir.join("kdd.csv");
    ok(&["synth-kdd", "--out", data.to_str().unwrap(), "--scale", "0.02", "--min-per-class", "20", "--max-per-class", "300"]);
    let config = dir.join("exp.toml");
    fs::write(
        &config,
        r#"
[dataset]
path = "kdd.csv"
format = "kdd-csv"

[assignment]
preset = "kdd"

[seeds]
partition = 1
training = 2
draws = 3

[rejector]
kind = "pca-reconstruction"
q = 0.05
components = 6

[classifier]
kind = "softmax-linear"
epochs = 60
learning_rate = 0.5

[output]
dir = "out"

[persona]
samples = 3
"#,
    )
    .unwrap();
    config
}

#[test]
fn full_flow_produces_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path());
    let cfg = config.to_str().unwrap();
    let out = tmp.path().join("out");

    ok(&["partition", "--config", cfg]);
    assert!(out.join("partition/manifest.toml").is_file());
    ok(&["train-rejector", "--config", cfg]);
    ok(&["train-classifier", "--config", cfg]);
    assert!(out.join("train-classifier/training_curve.csv").is_file());
    ok(&["eval-rejector", "--config", cfg]);
    ok(&["eval-classifier", "--config", cfg]);

    let summary = ok(&["run-mode", "--config", cfg, "--mode", "collaborative", "--tier", "2", "--rate", "3"]);
    assert!(summary.contains("micro"), "{summary}");
    let run = out.join("run-mode-collaborative-t2-r3");
    let decisions = fs::read_to_string(run.join("decisions.csv")).unwrap();
    assert!(decisions.starts_with("sample_id,true,predicted,stage,s_i\n"));

    ok(&["grid", "--config", cfg]);
    let grid = fs::read_to_string(out.join("grid/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 16);
    let manifest = fs::read_to_string(out.join("grid/manifest.toml")).unwrap();
    assert!(manifest.contains("# dataset sha256: "), "{manifest}");

    let md = ok(&["report", "--input", out.join("grid/grid.json").to_str().unwrap()]);
    assert_eq!(md, fs::read_to_string(out.join("grid/grid.md")).unwrap());
    let csv = ok(&["report", "--input", run.join("run.json").to_str().unwrap(), "--format", "csv"]);
    assert_eq!(csv, decisions);

    let persona = ok(&["coex-persona", "--config", cfg, "--tier", "1", "--persona", "alex", "--stub-decision", "intrusion"]);
    assert!(persona.contains("coex_sr = 100.0%"), "{persona}");
    let transcripts = fs::read_dir(out.join("coex-persona-alex-t1/transcripts")).unwrap().count();
    assert!(transcripts >= 1);
}

#[test]
fn same_config_and_seed_reproduce_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path());
    let cfg = config.to_str().unwrap();
    ok(&["train-rejector", "--config", cfg]);
    ok(&["train-classifier", "--config", cfg]);
    ok(&["grid", "--config", cfg]);
    let first = fs::read_to_string(tmp.path().join("out/grid/grid.csv")).unwrap();
    ok(&["grid", "--config", cfg, "--force"]);
    assert_eq!(first, fs::read_to_string(tmp.path().join("out/grid/grid.csv")).unwrap());
}

#[test]
fn existing_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path());
    let cfg = config.to_str().unwrap();
    ok(&["partition", "--config", cfg]);
    let again = a2c(&["partition", "--config", cfg]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("[output]"), "{}", stderr(&again));
    ok(&["partition", "--config", cfg, "--force"]);
}

#[test]
fn missing_models_name_the_training_step() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path());
    let out = a2c(&["grid", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("[models]") && err.contains("train-rejector"), "{err}");
}

#[test]
fn bad_config_is_a_config_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "[dataset]\npath = \"x.csv\"\nformat = \"kdd-csv\"\nbogus = 1\n").unwrap();
    let out = a2c(&["partition", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("[config]"), "{}", stderr(&out));
}

#[test]
fn persona_without_endpoint_asks_for_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace(tmp.path());
    let cfg = config.to_str().unwrap();
    ok(&["train-rejector", "--config", cfg]);
    ok(&["train-classifier", "--config", cfg]);
    let out = a2c(&["coex-persona", "--config", cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("A2C_CHAT_ENDPOINT"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(a2c(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(a2c(&["run-mode", "--config", "x.toml", "--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(a2c(&["run-mode", "--config", "x.toml", "--mode", "deferral", "--tier", "4"]).status.code(), Some(2));
}
