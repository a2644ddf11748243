use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PredictionSet;
use crate::dataset::ClassLabel;
use crate::{util, Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_order: Vec<ClassLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        matrix_csv(&self.class_order, &self.counts)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        util::write_bytes(path, &self.to_csv()?)
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::format("confusion csv", m);
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let class_order = header
            .iter()
            .skip(1)
            .map(|h| h.parse::<ClassLabel>())
            .collect::<Result<Vec<_>>>()?;
        let mut counts = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.get(0) != class_order.get(i).map(|c| c.name()) {
                return Err(bad(format!("row {i} label does not match header")));
            }
            counts.push(
                rec.iter()
                    .skip(1)
                    .map(|v| v.parse::<u64>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        if counts.len() != class_order.len() {
            return Err(bad("matrix is not square".into()));
        }
        Ok(ConfusionMatrix { class_order, counts })
    }
}

fn matrix_csv<T: ToString>(classes: &[ClassLabel], cells: &[Vec<T>]) -> Result<Vec<u8>> {
    let err = |e: csv::Error| Error::format("confusion csv", e);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![r"true\predicted".to_string()];
    header.extend(classes.iter().map(|c| c.to_string()));
    w.write_record(&header).map_err(err)?;
    for (class, row) in classes.iter().zip(cells) {
        let mut rec = vec![class.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::format("confusion csv", e))
}

pub fn confusion_matrix(predictions: &PredictionSet, class_order: &[ClassLabel]) -> Result<ConfusionMatrix> {
    let index = |label: ClassLabel| {
        class_order
            .iter()
            .position(|c| *c == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    };
    let k = class_order.len();
    let mut counts = vec![vec![0u64; k]; k];
    for row in &predictions.rows {
        counts[index(row.true_label)?][index(row.predicted_label)?] += 1;
    }
    Ok(ConfusionMatrix {
        class_order: class_order.to_vec(),
        counts,
    })
}

/// Row-stochastic form of a confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMatrix {
    pub class_order: Vec<ClassLabel>,
    pub rows: Vec<Vec<f64>>,
    /// Indices of true classes with no samples; their rows stay zero.
    pub zero_rows: Vec<usize>,
}

impl NormalizedMatrix {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        matrix_csv(&self.class_order, &self.rows)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        util::write_bytes(path, &self.to_csv()?)
    }
}

pub fn normalize_matrix(m: &ConfusionMatrix) -> NormalizedMatrix {
    let mut zero_rows = Vec::new();
    let rows = m
        .counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                zero_rows.push(i);
                vec![0.0; row.len()]
            } else {
                row.iter().map(|&c| c as f64 / sum as f64).collect()
            }
        })
        .collect();
    NormalizedMatrix {
        class_order: m.class_order.clone(),
        rows,
        zero_rows,
    }
}
