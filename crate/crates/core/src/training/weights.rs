//! JSON weight files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backend::{ClassifierBackend, ParamTensor};
use crate::util::{read_json, write_json};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub backend: String,
    pub version: String,
    pub tensors: Vec<ParamTensor>,
}

impl WeightFile {
    pub fn from_backend(backend: &dyn ClassifierBackend) -> Self {
        WeightFile {
            backend: backend.name().to_string(),
            version: backend.version().to_string(),
            tensors: backend.parameters().to_vec(),
        }
    }
}

pub fn save_weights(backend: &dyn ClassifierBackend, path: &Path) -> Result<()> {
    write_json(path, &WeightFile::from_backend(backend))
}

/// Copies every tensor whose name and length match; returns how many were copied.
///
/// Mismatched tensors (typically a head trained for another class count) keep
/// their current values. A file sharing no tensor with the backend is an error.
pub fn load_matching(backend: &mut dyn ClassifierBackend, path: &Path) -> Result<usize> {
    let file: WeightFile = read_json(path)?;
    if file.backend != backend.name() {
        return Err(Error::format(
            path.display().to_string(),
            format!("weights belong to backend {}, not {}", file.backend, backend.name()),
        ));
    }
    let mut copied = 0;
    for param in backend.parameters_mut() {
        if let Some(src) = file.tensors.iter().find(|t| t.name == param.name) {
            if src.values.len() == param.values.len() {
                param.values.copy_from_slice(&src.values);
                copied += 1;
            } else {
                log::warn!("skipping tensor {}: shape differs", param.name);
            }
        }
    }
    if copied == 0 {
        return Err(Error::format(path.display().to_string(), "no tensor matches the backend"));
    }
    Ok(copied)
}

/// Loads all tensors, requiring an exact match in names and sizes.
pub fn load_exact(backend: &mut dyn ClassifierBackend, path: &Path) -> Result<()> {
    let file: WeightFile = read_json(path)?;
    let params = backend.parameters_mut();
    let compatible = file.tensors.len() == params.len()
        && file
            .tensors
            .iter()
            .zip(params.iter())
            .all(|(a, b)| a.name == b.name && a.values.len() == b.values.len());
    if !compatible {
        return Err(Error::format(path.display().to_string(), "weights do not match the model layout"));
    }
    for (dst, src) in params.iter_mut().zip(file.tensors) {
        dst.values = src.values;
    }
    Ok(())
}
