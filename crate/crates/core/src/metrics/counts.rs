use serde::{Deserialize, Serialize};

use super::{PredictionSet, Score};
use crate::dataset::ClassLabel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Counts seen from the other side of a binary problem.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// One-vs-rest tally of `predictions` with respect to `positive`.
pub fn confusion_counts(predictions: &PredictionSet, positive: ClassLabel) -> Result<ConfusionCounts> {
    let classes = &predictions.class_order;
    if !classes.contains(&positive) {
        return Err(Error::UnknownLabel(positive.to_string()));
    }
    let mut c = ConfusionCounts::default();
    for row in &predictions.rows {
        for label in [row.true_label, row.predicted_label] {
            if !classes.contains(&label) {
                return Err(Error::UnknownLabel(label.to_string()));
            }
        }
        match (row.true_label == positive, row.predicted_label == positive) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `(TP + TN) / (TP + TN + FP + FN)`
pub fn accuracy(c: &ConfusionCounts) -> Score {
    Score::ratio(c.tp + c.tn, c.total())
}

/// `TP / (TP + FP)`
pub fn precision(c: &ConfusionCounts) -> Score {
    Score::ratio(c.tp, c.tp + c.fp)
}

/// `TP / (TP + FN)`, also called sensitivity.
pub fn recall(c: &ConfusionCounts) -> Score {
    Score::ratio(c.tp, c.tp + c.fn_)
}

/// `TN / (TN + FP)`
pub fn specificity(c: &ConfusionCounts) -> Score {
    Score::ratio(c.tn, c.tn + c.fp)
}

/// Harmonic mean `2PR / (P + R)`, zero when both are zero.
pub fn f1_score(precision: Score, recall: Score) -> Score {
    match (precision, recall) {
        (Score::Defined(p), Score::Defined(r)) => {
            if p + r == 0.0 {
                Score::Defined(0.0)
            } else {
                Score::Defined(2.0 * p * r / (p + r))
            }
        }
        _ => Score::Undefined,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::metrics::PredictionRow;

    fn d(v: f64) -> Score {
        Score::Defined(v)
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&ConfusionCounts::new(2, 2, 0, 0)), d(1.0));
        assert_eq!(accuracy(&ConfusionCounts::new(0, 0, 3, 7)), d(0.0));
        assert_eq!(accuracy(&ConfusionCounts::new(45, 40, 5, 10)), d(0.85));
        assert!(accuracy(&ConfusionCounts::default()).is_undefined());
    }

    #[test]
    fn precision_recall_specificity_examples() {
        assert_eq!(precision(&ConfusionCounts::new(5, 0, 0, 0)), d(1.0));
        assert_eq!(precision(&ConfusionCounts::new(0, 0, 4, 0)), d(0.0));
        assert_eq!(precision(&ConfusionCounts::new(30, 0, 10, 0)), d(0.75));
        assert!(precision(&ConfusionCounts::new(0, 5, 0, 5)).is_undefined());

        assert_eq!(recall(&ConfusionCounts::new(7, 0, 0, 0)), d(1.0));
        assert_eq!(recall(&ConfusionCounts::new(0, 0, 0, 5)), d(0.0));
        assert_eq!(recall(&ConfusionCounts::new(30, 0, 0, 20)), d(0.6));
        assert!(recall(&ConfusionCounts::new(0, 5, 5, 0)).is_undefined());

        assert_eq!(specificity(&ConfusionCounts::new(0, 9, 0, 0)), d(1.0));
        assert_eq!(specificity(&ConfusionCounts::new(0, 0, 2, 0)), d(0.0));
        assert_eq!(specificity(&ConfusionCounts::new(0, 40, 10, 0)), d(0.8));
        assert!(specificity(&ConfusionCounts::new(5, 0, 0, 5)).is_undefined());
    }

    #[test]
    fn f1_examples() {
        assert!((f1_score(d(0.4), d(0.4)).value().unwrap() - 0.4).abs() < 1e-15);
        assert!((f1_score(d(1.0), d(0.5)).value().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_score(d(0.0), d(0.0)), d(0.0));
        assert!(f1_score(Score::Undefined, d(0.5)).is_undefined());
    }

    /// Tally written as an explicit per-row loop with no shared helpers.
    fn tally(rows: &[(bool, bool)]) -> ConfusionCounts {
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        for &(truth, pred) in rows {
            if truth && pred {
                tp += 1;
            } else if !truth && !pred {
                tn += 1;
            } else if pred {
                fp += 1;
            } else {
                fn_ += 1;
            }
        }
        ConfusionCounts::new(tp, tn, fp, fn_)
    }

    fn set(rows: &[(bool, bool)]) -> PredictionSet {
        let label = |b: bool| if b { ClassLabel::Cancer } else { ClassLabel::Normal };
        PredictionSet {
            class_order: ClassLabel::BINARY.to_vec(),
            rows: rows
                .iter()
                .enumerate()
                .map(|(i, &(t, p))| PredictionRow {
                    sample_id: format!("s{i}"),
                    true_label: label(t),
                    predicted_label: label(p),
                    scores: vec![0.5, 0.5],
                })
                .collect(),
        }
    }

    #[test]
    fn tally_oracle_for_synthetic_rows() {
        // 45 TP, 40 TN, 5 FP, 10 FN laid out as 100 rows
        let mut rows = vec![(true, true); 45];
        rows.extend(vec![(false, false); 40]);
        rows.extend(vec![(false, true); 5]);
        rows.extend(vec![(true, false); 10]);
        let c = confusion_counts(&set(&rows), ClassLabel::Cancer).unwrap();
        assert_eq!(c, tally(&rows));
        assert_eq!(accuracy(&c), d(0.85));
    }

    #[test]
    fn edge_sets() {
        let c = confusion_counts(&set(&[]), ClassLabel::Cancer).unwrap();
        assert_eq!(c, ConfusionCounts::default());
        let c = confusion_counts(&set(&[(true, true), (false, false)]), ClassLabel::Cancer).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let err = confusion_counts(&set(&[(true, true)]), ClassLabel::Pro).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(_)));
    }

    proptest! {
        #[test]
        fn random_rows_match_tally(rows in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..60)) {
            let c = confusion_counts(&set(&rows), ClassLabel::Cancer).unwrap();
            prop_assert_eq!(c, tally(&rows));
            prop_assert_eq!(c.total(), rows.len() as u64);
            let swapped = confusion_counts(&set(&rows), ClassLabel::Normal).unwrap();
            prop_assert_eq!(swapped, c.swapped());
        }

        #[test]
        fn f1_between_precision_and_recall(p in 0.0..=1.0f64, r in 0.0..=1.0f64) {
            let f = f1_score(d(p), d(r)).value().unwrap();
            prop_assert!(f >= p.min(r) - 1e-15 && f <= p.max(r) + 1e-15);
        }
    }
}
