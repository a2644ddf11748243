use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::{util, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub sample_id: String,
    pub true_label: ClassLabel,
    pub predicted_label: ClassLabel,
    /// One normalized score per entry of the set's class order.
    pub scores: Vec<f64>,
}

impl PredictionRow {
    pub fn is_correct(&self) -> bool {
        self.true_label == self.predicted_label
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub class_order: Vec<ClassLabel>,
    pub rows: Vec<PredictionRow>,
}

impl PredictionSet {
    pub fn new(class_order: Vec<ClassLabel>) -> Self {
        PredictionSet {
            class_order,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with header `sample_id,true,predicted,score_<Class>...`.
    ///
    /// Scores use the shortest decimal form that parses back to the same `f64`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["sample_id".to_string(), "true".into(), "predicted".into()];
        header.extend(self.class_order.iter().map(|c| format!("score_{c}")));
        w.write_record(&header).map_err(|e| Error::format("predictions csv", e))?;
        for row in &self.rows {
            if row.scores.len() != self.class_order.len() {
                return Err(Error::format(
                    "predictions csv",
                    format!("row {} has {} scores for {} classes", row.sample_id, row.scores.len(), self.class_order.len()),
                ));
            }
            let mut rec = vec![
                row.sample_id.clone(),
                row.true_label.to_string(),
                row.predicted_label.to_string(),
            ];
            rec.extend(row.scores.iter().map(|s| s.to_string()));
            w.write_record(&rec).map_err(|e| Error::format("predictions csv", e))?;
        }
        w.into_inner().map_err(|e| Error::format("predictions csv", e))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::format("predictions csv", m);
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.len() < 3 || &header[0] != "sample_id" || &header[1] != "true" || &header[2] != "predicted" {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let class_order = header
            .iter()
            .skip(3)
            .map(|h| {
                h.strip_prefix("score_")
                    .ok_or_else(|| bad(format!("bad score column `{h}`")))
                    .and_then(|c| c.parse::<ClassLabel>())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let scores = rec
                .iter()
                .skip(3)
                .map(|s| s.parse::<f64>().map_err(|e| bad(format!("score `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(PredictionRow {
                sample_id: rec[0].to_string(),
                true_label: rec[1].parse()?,
                predicted_label: rec[2].parse()?,
                scores,
            });
        }
        Ok(PredictionSet { class_order, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_bytes(path, &self.to_csv()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(rows in proptest::collection::vec((any::<bool>(), any::<bool>(), 0.0..=1.0f64), 0..20)) {
            let label = |b: bool| if b { ClassLabel::Cancer } else { ClassLabel::Normal };
            let set = PredictionSet {
                class_order: ClassLabel::BINARY.to_vec(),
                rows: rows.iter().enumerate().map(|(i, &(t, p, s))| PredictionRow {
                    sample_id: format!("ALL_IMAGE/Pro/img,{i}.png"),
                    true_label: label(t),
                    predicted_label: label(p),
                    scores: vec![1.0 - s, s],
                }).collect(),
            };
            let bytes = set.to_csv().unwrap();
            let back = PredictionSet::from_csv(&bytes).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(back.to_csv().unwrap(), bytes);
        }
    }

    #[test]
    fn header_layout() {
        let set = PredictionSet::new(ClassLabel::BINARY.to_vec());
        let text = String::from_utf8(set.to_csv().unwrap()).unwrap();
        assert_eq!(text.trim(), "sample_id,true,predicted,score_Normal,score_Cancer");
    }
}
