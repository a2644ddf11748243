//! Stage implementations. Each stage reads its inputs from and writes its
//! outputs to the output directory; nothing is handed over in memory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::ImageFormat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::report::{
    emit_comparison_table, load_comparison_rows, render_confusion, render_history_curves, ComparisonRow, TableFormat,
};
use crate::augmentation::build_pipeline;
use crate::dataset::{
    ingest_dataset_with, merge_manifests, stratified_split, validate_manifest, ClassLabel, DatasetManifest,
    IngestOptions, SampleRecord, SourceDataset, Split, ValidationReport,
};
use crate::metrics::{confusion_matrix, normalize_matrix, ConfusionMatrix, MetricsReport, PredictionSet};
use crate::segmentation::segment_sample;
use crate::training::{
    decode_rgb, fine_tune, load_backend, BackendSpec, LoadedSample, TrainedModel, TrainingHistory,
};
use crate::util::{read_to_string, sha256_hex, write_bytes, write_json};
use crate::{Error, Result, TOOL_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prepare,
    Segment,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Prepare, Stage::Segment, Stage::Train, Stage::Evaluate, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Segment => "segment",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

/// Artifact locations under the output directory.
#[derive(Clone, Debug)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn run_record(&self, stage: Stage) -> PathBuf {
        self.stage_dir(stage).join("run.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.stage_dir(Stage::Prepare).join("manifest.json")
    }

    pub fn split(&self) -> PathBuf {
        self.stage_dir(Stage::Prepare).join("split.json")
    }

    pub fn validation(&self) -> PathBuf {
        self.stage_dir(Stage::Prepare).join("validation.json")
    }

    pub fn segmented_manifest(&self) -> PathBuf {
        self.stage_dir(Stage::Segment).join("manifest.json")
    }

    pub fn segmentation_summary(&self) -> PathBuf {
        self.stage_dir(Stage::Segment).join("segmentation.csv")
    }

    pub fn segmented_images(&self) -> PathBuf {
        self.stage_dir(Stage::Segment).join("images")
    }

    pub fn masks(&self) -> PathBuf {
        self.stage_dir(Stage::Segment).join("masks")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.stage_dir(Stage::Train).join("model")
    }

    pub fn history(&self) -> PathBuf {
        self.stage_dir(Stage::Train).join("history.csv")
    }

    pub fn predictions(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join("predictions.csv")
    }

    pub fn metrics(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join("metrics.json")
    }

    pub fn confusion(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join("confusion.csv")
    }

    pub fn confusion_normalized(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join("confusion_normalized.csv")
    }

    pub fn lock_file(&self) -> PathBuf {
        self.root.join(".blastscan.lock")
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(ws: &Workspace) -> Result<Self> {
        fs::create_dir_all(ws.root()).map_err(|e| Error::io(ws.root(), e))?;
        let path = ws.lock_file();
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Provenance record written as `run.json` in every stage directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub stage: Stage,
    pub tool_version: String,
    pub seed: u64,
    pub config_digest: String,
    /// SHA-256 of each input artifact, keyed by path relative to the output directory.
    pub inputs: BTreeMap<String, String>,
    /// Outputs relative to the output directory.
    pub outputs: Vec<String>,
    /// Splits that saw augmentation (training only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub augmented_splits: Vec<Split>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub artifacts: Vec<PathBuf>,
}

fn require(path: &Path, producer: Stage) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            command: producer.name().to_string(),
        })
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn rel(ws: &Workspace, path: &Path) -> String {
    path.strip_prefix(ws.root())
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn record_run(
    ws: &Workspace,
    cfg: &PipelineConfig,
    stage: Stage,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
    augmented_splits: Vec<Split>,
) -> Result<PathBuf> {
    let inputs = inputs
        .iter()
        .map(|p| Ok((rel(ws, p), file_digest(p)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let meta = RunMetadata {
        stage,
        tool_version: TOOL_VERSION.to_string(),
        seed: cfg.seed,
        config_digest: cfg.digest()?,
        inputs,
        outputs: outputs.iter().map(|p| rel(ws, p)).collect(),
        augmented_splits,
    };
    let path = ws.run_record(stage);
    write_json(&path, &meta)?;
    Ok(path)
}

/// Runs one stage under the output-directory lock.
///
/// `model_dir` overrides where `evaluate` looks for the trained model.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, model_dir: Option<&Path>) -> Result<StageOutcome> {
    cfg.validate()?;
    let ws = Workspace::new(cfg.out_dir());
    let _lock = RunLock::acquire(&ws)?;
    log::info!("running {stage} into {}", ws.root().display());
    let artifacts = match stage {
        Stage::Prepare => prepare(cfg, &ws)?,
        Stage::Segment => segment(cfg, &ws)?,
        Stage::Train => train(cfg, &ws)?,
        Stage::Evaluate => evaluate(cfg, &ws, model_dir)?,
        Stage::Report => report(cfg, &ws)?,
    };
    Ok(StageOutcome { stage, artifacts })
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<StageOutcome>> {
    Stage::ALL.into_iter().map(|s| run_stage(s, cfg, None)).collect()
}

#[derive(Serialize)]
struct ValidationFile {
    sources: BTreeMap<SourceDataset, ValidationReport>,
    merged: ValidationReport,
}

fn prepare(cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<PathBuf>> {
    let d = &cfg.dataset;
    let opts = IngestOptions {
        verify_images: d.verify_images,
    };
    let mut sources = BTreeMap::new();
    let mut manifests = Vec::new();
    let mut merged_expected: BTreeMap<ClassLabel, usize> = BTreeMap::new();
    for (kind, root) in [(SourceDataset::AllImage, &d.all_image_root), (SourceDataset::AllIdb1, &d.all_idb1_root)] {
        let Some(root) = root else {
            manifests.push(DatasetManifest::empty());
            continue;
        };
        let m = ingest_dataset_with(&cfg.resolve(root), kind, &opts)?;
        let expected = d.expected_for(kind);
        for (class, n) in &expected {
            let target = d.class_map.get(class).ok_or_else(|| Error::UnmappedClass(class.to_string()))?;
            *merged_expected.entry(*target).or_default() += n;
        }
        let report = validate_manifest(&m, &expected);
        for c in report.mismatches() {
            log::warn!("{}: {} has {} images, expected {}", kind.prefix(), c.class, c.actual, c.expected);
        }
        if d.strict_counts && !report.passed {
            return Err(Error::Config(format!("{} class counts differ from the expected counts", kind.prefix())));
        }
        sources.insert(kind, report);
        manifests.push(m);
    }
    let merged = merge_manifests(&manifests[0], &manifests[1], &d.class_map)?;
    let merged_report = validate_manifest(&merged, &merged_expected);
    let assignment = stratified_split(&merged, d.ratios, cfg.seed)?;
    let manifest = assignment.apply(&merged)?;
    for (split, counts) in &assignment.per_split_counts {
        log::info!("{split}: {counts:?}");
    }

    let outputs = vec![ws.manifest(), ws.split(), ws.validation()];
    manifest.save(&ws.manifest())?;
    write_json(&ws.split(), &assignment)?;
    write_json(
        &ws.validation(),
        &ValidationFile {
            sources,
            merged: merged_report,
        },
    )?;
    let run = record_run(ws, cfg, Stage::Prepare, &[], &outputs, Vec::new())?;
    Ok(outputs.into_iter().chain([run]).collect())
}

/// Output name for a sample: its id, with `.png` appended unless already present.
fn png_name(sample_id: &str) -> String {
    if sample_id.to_ascii_lowercase().ends_with(".png") {
        sample_id.to_string()
    } else {
        format!("{sample_id}.png")
    }
}

fn save_png(image: &image::RgbImage, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    image
        .write_to(&mut std::io::Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| Error::format(path.display().to_string(), e))?;
    write_bytes(path, &bytes)
}

fn segment(cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<PathBuf>> {
    require(&ws.manifest(), Stage::Prepare)?;
    let manifest = DatasetManifest::load(&ws.manifest())?;
    let seg = &cfg.segmentation;
    let images_dir = ws.segmented_images();
    let masks_dir = ws.masks();

    let summary: Vec<(f64, bool)> = manifest
        .records()
        .par_iter()
        .map(|r| -> Result<(f64, bool)> {
            let ctx = |e: Error| Error::Sample {
                sample_id: r.sample_id.clone(),
                source: Box::new(e),
            };
            let image = decode_rgb(&r.path).map_err(ctx)?;
            let out = segment_sample(&image, seg).map_err(ctx)?;
            let name = png_name(&r.sample_id);
            save_png(&out.image, &images_dir.join(&name)).map_err(ctx)?;
            if seg.debug_masks {
                out.mask.write_png(&masks_dir.join(&name)).map_err(ctx)?;
            }
            Ok((out.foreground_fraction, out.fallback_used))
        })
        .collect::<Result<_>>()?;

    let segmented = manifest.with_paths(|r| images_dir.join(png_name(&r.sample_id)))?;
    segmented.save(&ws.segmented_manifest())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::format("segmentation summary", e);
    w.write_record(["sample_id", "foreground_fraction", "fallback_used"]).map_err(err)?;
    for (r, (fraction, fallback)) in manifest.records().iter().zip(&summary) {
        w.write_record([r.sample_id.as_str(), &fraction.to_string(), &fallback.to_string()])
            .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("segmentation summary", e.to_string()))?;
    write_bytes(&ws.segmentation_summary(), &bytes)?;
    let fallbacks = summary.iter().filter(|s| s.1).count();
    if fallbacks > 0 {
        log::warn!("{fallbacks} of {} images kept unsegmented (too little foreground)", summary.len());
    }

    let mut outputs = vec![ws.segmented_manifest(), ws.segmentation_summary(), images_dir];
    if seg.debug_masks {
        outputs.push(masks_dir);
    }
    let run = record_run(ws, cfg, Stage::Segment, &[ws.manifest()], &outputs, Vec::new())?;
    outputs.push(run);
    Ok(outputs)
}

fn load_samples(records: &[&SampleRecord], resolution: u32) -> Result<Vec<LoadedSample>> {
    records
        .par_iter()
        .map(|r| {
            let image = decode_rgb(&r.path).map_err(|e| Error::Sample {
                sample_id: r.sample_id.clone(),
                source: Box::new(e),
            })?;
            Ok(LoadedSample {
                sample_id: r.sample_id.clone(),
                label: r.label(),
                image: crate::training::fit_resolution(&image, resolution),
            })
        })
        .collect()
}

fn train(cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<PathBuf>> {
    require(&ws.segmented_manifest(), Stage::Segment)?;
    let manifest = DatasetManifest::load(&ws.segmented_manifest())?;
    let tc = &cfg.training;
    let class_order = cfg.class_order();

    let train_records = manifest.split_records(Split::Train);
    let val_records = manifest.split_records(cfg.evaluation.validation_split);
    if train_records.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if val_records.is_empty() {
        return Err(Error::EmptySplit(cfg.evaluation.validation_split.to_string()));
    }
    let train_set = load_samples(&train_records, tc.input_resolution)?;
    let val_set = load_samples(&val_records, tc.input_resolution)?;

    let backend = load_backend(&BackendSpec {
        name: tc.backend.clone(),
        num_classes: class_order.len(),
        input_resolution: tc.input_resolution,
        seed: tc.seed,
        pretrained: tc.pretrained.as_ref().map(|p| cfg.resolve(p)),
    })?;
    let augment = build_pipeline(&cfg.augmentation)?;
    let outcome = fine_tune(backend, &train_set, &val_set, &class_order, tc, &augment)?;
    log::info!("best validation epoch: {}", outcome.best_epoch);

    let model = TrainedModel::new(
        outcome.backend,
        class_order,
        tc.clone(),
        manifest.digest()?,
        outcome.best_epoch,
    )?;
    model.save(&ws.model_dir())?;
    outcome.history.save(&ws.history())?;

    let outputs = vec![ws.model_dir(), ws.history()];
    let augmented = if augment.is_identity() { Vec::new() } else { vec![Split::Train] };
    let run = record_run(ws, cfg, Stage::Train, &[ws.segmented_manifest()], &outputs, augmented)?;
    Ok(outputs.into_iter().chain([run]).collect())
}

fn evaluate(cfg: &PipelineConfig, ws: &Workspace, model_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let model_dir = model_dir.map(Path::to_path_buf).unwrap_or_else(|| ws.model_dir());
    let model = TrainedModel::load(&model_dir)?;
    require(&ws.segmented_manifest(), Stage::Segment)?;
    let manifest = DatasetManifest::load(&ws.segmented_manifest())?;
    if manifest.digest()? != model.metadata.manifest_digest {
        log::warn!("model was trained on a different manifest than {}", ws.segmented_manifest().display());
    }
    let class_order = model.class_order().to_vec();
    if class_order != cfg.class_order() {
        return Err(Error::Config(format!(
            "model classes {:?} differ from the configured classes {:?}",
            class_order,
            cfg.class_order()
        )));
    }
    let records = manifest.split_records(cfg.evaluation.split);
    if records.is_empty() {
        return Err(Error::EmptySplit(cfg.evaluation.split.to_string()));
    }
    let predictions = model.evaluate_split(&records)?;
    predictions.save(&ws.predictions())?;
    let metrics = MetricsReport::from_predictions(&predictions, cfg.evaluation.positive_class)?;
    metrics.save(&ws.metrics())?;
    let matrix = confusion_matrix(&predictions, &class_order)?;
    matrix.save_csv(&ws.confusion())?;
    normalize_matrix(&matrix).save_csv(&ws.confusion_normalized())?;
    log::info!("{} accuracy on {} images: {}", cfg.evaluation.split, predictions.len(), metrics.accuracy);

    let outputs = vec![ws.predictions(), ws.metrics(), ws.confusion(), ws.confusion_normalized()];
    let inputs = [
        ws.segmented_manifest(),
        model_dir.join(crate::training::MODEL_METADATA_FILE),
        model_dir.join(&model.metadata.weights_file),
    ];
    let run = record_run(ws, cfg, Stage::Evaluate, &inputs, &outputs, Vec::new())?;
    Ok(outputs.into_iter().chain([run]).collect())
}

fn report(cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<PathBuf>> {
    require(&ws.history(), Stage::Train)?;
    require(&ws.metrics(), Stage::Evaluate)?;
    require(&ws.confusion(), Stage::Evaluate)?;
    let dir = ws.stage_dir(Stage::Report);
    let history = TrainingHistory::load(&ws.history())?;
    let metrics = MetricsReport::load(&ws.metrics())?;
    let matrix = ConfusionMatrix::from_csv(read_to_string(&ws.confusion())?.as_bytes())?;
    // Predictions are re-read so a hand-edited metrics file cannot drift from them.
    if ws.predictions().exists() {
        let preds = PredictionSet::load(&ws.predictions())?;
        let recomputed = MetricsReport::from_predictions(&preds, metrics.positive_class)?;
        if recomputed != metrics {
            log::warn!("{} does not match {}", ws.metrics().display(), ws.predictions().display());
        }
    }

    let curves = render_history_curves(&history, &dir)?;
    let mut outputs = vec![curves.csv];
    outputs.extend(curves.plots);
    outputs.extend(render_confusion(&matrix, &normalize_matrix(&matrix), &dir)?);

    let mut rows = load_comparison_rows(cfg.report.comparison_rows.as_ref().map(|p| cfg.resolve(p)).as_deref())?;
    let methodology = cfg.report.methodology.clone().unwrap_or_else(|| cfg.training.backend.clone());
    rows.push(ComparisonRow::from_metrics(&cfg.report.study, &methodology, &cfg.report.dataset, &metrics));
    let md = dir.join("comparison.md");
    let csv = dir.join("comparison.csv");
    write_bytes(&md, emit_comparison_table(&rows, TableFormat::Markdown)?.as_bytes())?;
    write_bytes(&csv, emit_comparison_table(&rows, TableFormat::Csv)?.as_bytes())?;
    outputs.extend([md, csv]);

    let run = record_run(ws, cfg, Stage::Report, &[ws.history(), ws.metrics(), ws.confusion()], &outputs, Vec::new())?;
    outputs.push(run);
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        let lock = RunLock::acquire(&ws).unwrap();
        assert!(matches!(RunLock::acquire(&ws), Err(Error::Locked(_))));
        drop(lock);
        RunLock::acquire(&ws).unwrap();
    }

    #[test]
    fn missing_upstream_names_producer() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        fs::create_dir_all(&data).unwrap();
        let mut cfg = PipelineConfig {
            base_dir: dir.path().to_path_buf(),
            ..PipelineConfig::default()
        };
        cfg.dataset.all_idb1_root = Some(data);
        let err = run_stage(Stage::Segment, &cfg, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("prepare/manifest.json") && msg.contains("`prepare`"), "{msg}");
        let err = run_stage(Stage::Report, &cfg, None).unwrap_err();
        assert!(err.to_string().contains("`train`"), "{err}");
    }

    #[test]
    fn stage_names_parse() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("deploy".parse::<Stage>().is_err());
    }

    #[test]
    fn png_names() {
        assert_eq!(png_name("ALL_IDB1/Normal/a.jpg"), "ALL_IDB1/Normal/a.jpg.png");
        assert_eq!(png_name("ALL_IDB1/Normal/a.PNG"), "ALL_IDB1/Normal/a.PNG");
    }
}
