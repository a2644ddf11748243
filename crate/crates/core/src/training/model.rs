//! Trained-model artifact: weights plus JSON metadata.

use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backend::{load_backend, predict_scores, BackendSpec, ClassScores, ClassifierBackend};
use super::trainer::TrainConfig;
use super::weights::{load_exact, save_weights};
use crate::dataset::{ClassLabel, SampleRecord};
use crate::metrics::{PredictionRow, PredictionSet};
use crate::util::{read_json, write_json};
use crate::{Error, Result, TOOL_VERSION};

pub const MODEL_METADATA_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub backend: String,
    pub backend_version: String,
    pub input_resolution: u32,
    pub class_order: Vec<ClassLabel>,
    pub config: TrainConfig,
    pub manifest_digest: String,
    pub best_epoch: usize,
    pub weights_file: String,
    pub created_with: String,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub metadata: ModelMetadata,
    backend: Box<dyn ClassifierBackend>,
}

impl TrainedModel {
    pub fn new(
        backend: Box<dyn ClassifierBackend>,
        class_order: Vec<ClassLabel>,
        config: TrainConfig,
        manifest_digest: String,
        best_epoch: usize,
    ) -> Result<Self> {
        if backend.num_classes() != class_order.len() {
            return Err(Error::InvalidArgument(format!(
                "backend has {} outputs for {} classes",
                backend.num_classes(),
                class_order.len()
            )));
        }
        let metadata = ModelMetadata {
            backend: backend.name().to_string(),
            backend_version: backend.version().to_string(),
            input_resolution: backend.input_resolution(),
            class_order,
            config,
            manifest_digest,
            best_epoch,
            weights_file: WEIGHTS_FILE.to_string(),
            created_with: TOOL_VERSION.to_string(),
        };
        Ok(TrainedModel { metadata, backend })
    }

    pub fn backend(&self) -> &dyn ClassifierBackend {
        self.backend.as_ref()
    }

    pub fn class_order(&self) -> &[ClassLabel] {
        &self.metadata.class_order
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_weights(self.backend.as_ref(), &dir.join(&self.metadata.weights_file))?;
        write_json(&dir.join(MODEL_METADATA_FILE), &self.metadata)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(MODEL_METADATA_FILE);
        if !meta_path.is_file() {
            return Err(Error::MissingArtifact {
                path: meta_path,
                command: "train".into(),
            });
        }
        let metadata: ModelMetadata = read_json(&meta_path)?;
        let mut backend = load_backend(&BackendSpec {
            name: metadata.backend.clone(),
            num_classes: metadata.class_order.len(),
            input_resolution: metadata.input_resolution,
            seed: metadata.config.seed,
            pretrained: None,
        })?;
        if backend.version() != metadata.backend_version {
            log::warn!(
                "model was trained with {} version {}, loading with version {}",
                metadata.backend,
                metadata.backend_version,
                backend.version()
            );
        }
        load_exact(backend.as_mut(), &dir.join(&metadata.weights_file))?;
        Ok(TrainedModel { metadata, backend })
    }

    pub fn predict(&self, image: &RgbImage) -> Result<ClassScores> {
        predict_scores(self.backend.as_ref(), &self.metadata.class_order, image)
    }

    pub fn predict_path(&self, path: &Path) -> Result<ClassScores> {
        let image = decode_rgb(path)?;
        self.predict(&image)
    }

    /// One prediction row per record, in the order given.
    pub fn evaluate_split(&self, records: &[&SampleRecord]) -> Result<PredictionSet> {
        if records.is_empty() {
            return Err(Error::EmptySplit("evaluation".into()));
        }
        let rows = records
            .par_iter()
            .map(|r| -> Result<PredictionRow> {
                let with_ctx = |e: Error| Error::Sample {
                    sample_id: r.sample_id.clone(),
                    source: Box::new(e),
                };
                let scores = self.predict_path(&r.path).map_err(with_ctx)?;
                Ok(PredictionRow {
                    sample_id: r.sample_id.clone(),
                    true_label: r.label(),
                    predicted_label: scores.predicted(),
                    scores: scores.scores,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PredictionSet {
            class_order: self.metadata.class_order.clone(),
            rows,
        })
    }
}

/// Decodes any supported image file to RGB8.
pub fn decode_rgb(path: &Path) -> Result<RgbImage> {
    let corrupt = |message: String| Error::CorruptImage {
        path: PathBuf::from(path),
        message,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    Ok(reader.decode().map_err(|e| corrupt(e.to_string()))?.to_rgb8())
}

#[cfg(test)]
mod tests {
    use image::Rgb;

    use super::*;
    use crate::dataset::SourceDataset;

    fn model() -> TrainedModel {
        let backend = load_backend(&BackendSpec::reference(2, 8, 1)).unwrap();
        TrainedModel::new(backend, ClassLabel::BINARY.to_vec(), TrainConfig::default(), "abc".into(), 1).unwrap()
    }

    #[test]
    fn save_load_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let m = model();
        m.save(dir.path()).unwrap();
        let back = TrainedModel::load(dir.path()).unwrap();
        assert_eq!(back.metadata, m.metadata);
        let img = RgbImage::from_fn(12, 12, |x, y| Rgb([(x * 20) as u8, (y * 20) as u8, 100]));
        let a = m.predict(&img).unwrap();
        assert_eq!(a, back.predict(&img).unwrap());
        assert_eq!(a, m.predict(&img).unwrap());
        assert!((a.scores.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn missing_model_names_command() {
        let dir = tempfile::tempdir().unwrap();
        let err = TrainedModel::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("train"), "{err}");
    }

    #[test]
    fn corrupt_image_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, b"not a png").unwrap();
        let m = model();
        let err = m.predict_path(&bad).unwrap_err();
        assert!(err.to_string().contains("bad.png"), "{err}");

        let rec = SampleRecord {
            sample_id: "ALL_IDB1/Normal/bad.png".into(),
            path: bad,
            source_dataset: SourceDataset::AllIdb1,
            original_class: ClassLabel::Normal,
            mapped_class: Some(ClassLabel::Normal),
            split: None,
        };
        let err = m.evaluate_split(&[&rec]).unwrap_err();
        assert!(err.to_string().contains("ALL_IDB1/Normal/bad.png"), "{err}");
    }
}
