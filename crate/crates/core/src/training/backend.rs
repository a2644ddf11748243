use std::fmt;
use std::path::PathBuf;

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::reference_cnn::ReferenceCnn;
use super::weights;
use crate::dataset::ClassLabel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Backbone,
    Head,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub group: ParamGroup,
    pub values: Vec<f64>,
}

/// Per-parameter gradients, aligned with [`ClassifierBackend::parameters`].
pub type Gradients = Vec<Vec<f64>>;

/// Result of one forward/backward pass on a single labelled image.
#[derive(Clone, Debug)]
pub struct BackwardPass {
    pub loss: f64,
    pub logits: Vec<f64>,
    pub gradients: Gradients,
}

/// A trainable image classifier.
///
/// Inputs passed to [`logits`](Self::logits) and [`backward`](Self::backward)
/// are already resized to [`input_resolution`](Self::input_resolution).
pub trait ClassifierBackend: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn version(&self) -> &str;
    fn input_resolution(&self) -> u32;
    fn num_classes(&self) -> usize;

    fn logits(&self, image: &RgbImage) -> Result<Vec<f64>>;

    /// Softmax cross-entropy loss against `target` and its parameter gradients.
    fn backward(&self, image: &RgbImage, target: usize) -> Result<BackwardPass>;

    fn parameters(&self) -> &[ParamTensor];
    fn parameters_mut(&mut self) -> &mut [ParamTensor];

    fn clone_box(&self) -> Box<dyn ClassifierBackend>;
}

impl Clone for Box<dyn ClassifierBackend> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Backend selection plus construction options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    pub num_classes: usize,
    pub input_resolution: u32,
    pub seed: u64,
    /// Weights file to start from (transfer learning); random init when absent.
    pub pretrained: Option<PathBuf>,
}

impl BackendSpec {
    pub fn reference(num_classes: usize, input_resolution: u32, seed: u64) -> Self {
        BackendSpec {
            name: ReferenceCnn::NAME.to_string(),
            num_classes,
            input_resolution,
            seed,
            pretrained: None,
        }
    }
}

const DETECTOR_ADAPTERS: &[&str] = &["yolov8", "yolov8s", "yolov11", "yolov11s"];

pub fn load_backend(spec: &BackendSpec) -> Result<Box<dyn ClassifierBackend>> {
    let mut backend: Box<dyn ClassifierBackend> = match spec.name.as_str() {
        ReferenceCnn::NAME => Box::new(ReferenceCnn::new(spec.input_resolution, spec.num_classes, spec.seed)?),
        name if DETECTOR_ADAPTERS.contains(&name) => {
            return Err(Error::BackendUnavailable {
                name: name.to_string(),
                reason: "the Ultralytics runtime this adapter drives is not part of this build".into(),
            })
        }
        other => return Err(Error::UnknownBackend(other.to_string())),
    };
    if let Some(path) = &spec.pretrained {
        let loaded = weights::load_matching(backend.as_mut(), path)?;
        log::info!("loaded {loaded} pretrained tensors from {}", path.display());
    }
    Ok(backend)
}

/// Normalized class probabilities in a fixed class order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassScores {
    pub class_order: Vec<ClassLabel>,
    pub scores: Vec<f64>,
}

impl ClassScores {
    /// Index of the highest score; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.scores)
    }

    pub fn predicted(&self) -> ClassLabel {
        self.class_order[self.argmax()]
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn fit_resolution(image: &RgbImage, resolution: u32) -> RgbImage {
    if image.dimensions() == (resolution, resolution) {
        image.clone()
    } else {
        imageops::resize(image, resolution, resolution, FilterType::Triangle)
    }
}

/// Resizes, runs the backend and normalizes its logits.
pub fn predict_scores(backend: &dyn ClassifierBackend, class_order: &[ClassLabel], image: &RgbImage) -> Result<ClassScores> {
    let input = fit_resolution(image, backend.input_resolution());
    let logits = backend.logits(&input)?;
    if logits.len() != class_order.len() || logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "backend {} returned {} logits for {} classes",
            backend.name(),
            logits.len(),
            class_order.len()
        )));
    }
    Ok(ClassScores {
        class_order: class_order.to_vec(),
        scores: softmax(&logits),
    })
}
