//! Command-line behavior: stage chaining, errors, overrides and idempotence.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blastscan::fixture::{write_overfit_fixture, write_toy_fixture};
use blastscan::metrics::{MetricsReport, PredictionSet, Score};
use blastscan::pipeline::{PipelineConfig, Stage, Workspace};

fn blastscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blastscan"))
        .args(args)
        .output()
        .expect("spawn blastscan")
}

fn ok(args: &[&str]) -> String {
    let out = blastscan(args);
    assert!(
        out.status.success(),
        "blastscan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace(config: &Path) -> Workspace {
    Workspace::new(PipelineConfig::load(config).unwrap().out_dir())
}

#[test]
fn overfit_fixture_train_then_evaluate_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_overfit_fixture(dir.path(), 1).unwrap();
    let cfg = paths.config.to_str().unwrap();
    for stage in ["prepare", "segment", "train"] {
        ok(&[stage, "--config", cfg]);
    }
    let ws = workspace(&paths.config);
    let model = ws.model_dir();
    ok(&["evaluate", "--config", cfg, "--model", model.to_str().unwrap()]);
    let metrics = MetricsReport::load(&ws.metrics()).unwrap();
    assert_eq!(metrics.accuracy, Score::Defined(1.0));
    let preds = PredictionSet::load(&ws.predictions()).unwrap();
    assert_eq!(preds.len(), 8);
    assert!(preds.rows.iter().all(|r| r.is_correct()));
    for row in &preds.rows {
        assert!((row.scores.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn missing_upstream_artifact_fails_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_overfit_fixture(dir.path(), 1).unwrap();
    let out = blastscan(&["train", "--config", paths.config.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("segment/manifest.json") && err.contains("`segment`"), "{err}");

    let out = blastscan(&["evaluate", "--config", paths.config.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`train`"));
}

#[test]
fn unavailable_backend_is_an_explicit_error() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_overfit_fixture(dir.path(), 1).unwrap();
    let text = fs::read_to_string(&paths.config).unwrap();
    fs::write(&paths.config, text.replace("backend = \"reference_cnn\"", "backend = \"yolov11s\"")).unwrap();
    let cfg = paths.config.to_str().unwrap();
    ok(&["prepare", "--config", cfg]);
    ok(&["segment", "--config", cfg]);
    let out = blastscan(&["train", "--config", cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("backend unavailable"));
}

#[test]
fn rerunning_stages_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_toy_fixture(dir.path(), 5).unwrap();
    let cfg = paths.config.to_str().unwrap();
    ok(&["run-all", "--config", cfg]);
    let ws = workspace(&paths.config);
    let files = [
        ws.manifest(),
        ws.segmented_manifest(),
        ws.segmentation_summary(),
        ws.history(),
        ws.predictions(),
        ws.metrics(),
        ws.confusion_normalized(),
        ws.stage_dir(Stage::Report).join("curves.csv"),
        ws.stage_dir(Stage::Report).join("comparison.csv"),
        ws.run_record(Stage::Train),
    ];
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    ok(&["run-all", "--config", cfg]);
    for (f, old) in files.iter().zip(before) {
        assert_eq!(fs::read(f).unwrap(), old, "{} changed", f.display());
    }
}

#[test]
fn seed_and_out_dir_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_toy_fixture(dir.path(), 5).unwrap();
    let cfg = paths.config.to_str().unwrap();
    let alt = dir.path().join("alt");
    ok(&["prepare", "--config", cfg]);
    ok(&["prepare", "--config", cfg, "--seed", "6", "--out-dir", alt.to_str().unwrap()]);
    let default_split = fs::read_to_string(workspace(&paths.config).split()).unwrap();
    let alt_split = fs::read_to_string(Workspace::new(&alt).split()).unwrap();
    assert_ne!(default_split, alt_split);
    assert!(alt_split.contains("\"seed\": 6"));
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_overfit_fixture(dir.path(), 1).unwrap();
    let ws = workspace(&paths.config);
    fs::create_dir_all(ws.root()).unwrap();
    fs::write(ws.lock_file(), "123").unwrap();
    let out = blastscan(&["prepare", "--config", paths.config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lock"));
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_overfit_fixture(dir.path(), 1).unwrap();
    let text = fs::read_to_string(&paths.config).unwrap();
    fs::write(&paths.config, text.replace("epochs = 200", "epochs = 0")).unwrap();
    let out = blastscan(&["prepare", "--config", paths.config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
}
