use std::path::Path;
use std::process::{Command, Output};

fn prodintent(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prodintent"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(prodintent(dir.path(), &["--bogus", "generate"]).status.code(), Some(1));
    assert_eq!(prodintent(dir.path(), &["no-such-stage"]).status.code(), Some(1));
    assert_eq!(prodintent(dir.path(), &["--help"]).status.code(), Some(0));
    std::fs::write(dir.path().join("bad.toml"), "sed = 3\n").unwrap();
    assert_eq!(prodintent(dir.path(), &["--config", "bad.toml", "generate"]).status.code(), Some(1));
}

#[test]
fn missing_input_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = prodintent(dir.path(), &["train-product"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("stage train-product failed"), "{err}");
    assert!(err.contains("log.jsonl"), "{err}");
}

#[test]
fn failed_stage_keeps_prior_artifacts_and_reruns_are_noops() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "vocab_size = 300\n[generator]\nn_sessions = 150\n";
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    for stage in ["generate", "build-vocab"] {
        let o = prodintent(dir.path(), &["--config", "c.toml", stage]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let work = dir.path().join("work");
    let vocab = std::fs::read(work.join("vocab.txt")).unwrap();
    let report = std::fs::read(work.join("reports/build-vocab.json")).unwrap();

    let again = prodintent(dir.path(), &["--config", "c.toml", "build-vocab"]);
    assert!(String::from_utf8_lossy(&again.stdout).contains("up to date"));

    // A vocabulary smaller than the alphabet is a stage failure.
    let o = prodintent(dir.path(), &["--config", "c.toml", "--vocab-size", "3", "build-vocab"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stage build-vocab failed"));
    assert_eq!(std::fs::read(work.join("vocab.txt")).unwrap(), vocab);
    assert_eq!(std::fs::read(work.join("reports/build-vocab.json")).unwrap(), report);

    // Changing an input invalidates the stage.
    let log = work.join("log.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    let first_line_len = text.find('\n').unwrap() + 1;
    std::fs::write(&log, &text[first_line_len..]).unwrap();
    let o = prodintent(dir.path(), &["--config", "c.toml", "build-vocab"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("wrote"));
}

#[test]
fn report_names_inputs_seeds_and_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[generator]\nn_sessions = 80\n").unwrap();
    let o = prodintent(dir.path(), &["--config", "c.toml", "--seed", "42", "--out", "o", "generate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/reports/generate.json")).unwrap()).unwrap();
    assert_eq!(report["stage"], "generate");
    assert_eq!(report["seeds"]["generate"], 42);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert!(report["outputs"]["log.jsonl"].is_string());
    assert!(report["outputs"]["truth.tsv"].is_string());
    let text = std::fs::read_to_string(dir.path().join("o/reports/generate.json")).unwrap();
    assert!(!text.contains("timestamp"));
}
