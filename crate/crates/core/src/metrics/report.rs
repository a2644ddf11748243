use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{accuracy, confusion_counts, f1_score, precision, recall, specificity, ConfusionCounts, PredictionSet, Score};
use crate::dataset::ClassLabel;
use crate::{util, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Score,
    pub precision: Score,
    pub recall: Score,
    pub f1: Score,
    pub specificity: Score,
    pub counts: ConfusionCounts,
    pub positive_class: ClassLabel,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts, positive_class: ClassLabel) -> Self {
        let p = precision(&counts);
        let r = recall(&counts);
        MetricsReport {
            accuracy: accuracy(&counts),
            precision: p,
            recall: r,
            f1: f1_score(p, r),
            specificity: specificity(&counts),
            counts,
            positive_class,
        }
    }

    /// Positive class defaults to `Cancer`.
    pub fn from_predictions(predictions: &PredictionSet, positive_class: ClassLabel) -> Result<Self> {
        Ok(Self::from_counts(confusion_counts(predictions, positive_class)?, positive_class))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        util::read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_agrees_with_own_fields() {
        let r = MetricsReport::from_counts(ConfusionCounts::new(30, 40, 10, 20), ClassLabel::Cancer);
        let (p, rc) = (r.precision.value().unwrap(), r.recall.value().unwrap());
        assert!((r.f1.value().unwrap() - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
    }

    #[test]
    fn json_marks_undefined() {
        let r = MetricsReport::from_counts(ConfusionCounts::new(0, 5, 0, 0), ClassLabel::Cancer);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""precision":"undefined""#), "{json}");
        assert!(json.contains(r#""fn":0"#));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
