//! Confusion counts, the five headline scores and confusion matrices.
//!
//! Scores whose denominator is zero are [`Score::Undefined`] rather than 0 or NaN.

mod counts;
mod matrix;
mod predictions;
mod report;

pub use counts::{accuracy, confusion_counts, f1_score, precision, recall, specificity, ConfusionCounts};
pub use matrix::{confusion_matrix, normalize_matrix, ConfusionMatrix, NormalizedMatrix};
pub use predictions::{PredictionRow, PredictionSet};
pub use report::MetricsReport;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A ratio that may be undefined because its denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Score {
    Defined(f64),
    Undefined,
}

impl Score {
    pub(crate) fn ratio(num: u64, den: u64) -> Score {
        if den == 0 {
            Score::Undefined
        } else {
            Score::Defined(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Score::Defined(v) => Some(v),
            Score::Undefined => None,
        }
    }

    pub fn is_undefined(self) -> bool {
        matches!(self, Score::Undefined)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Defined(v) => write!(f, "{v}"),
            Score::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Score::Defined(v) => s.serialize_f64(*v),
            Score::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Score::Defined(v)),
            Repr::Text(t) if t == "undefined" => Ok(Score::Undefined),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"undefined\", got {t:?}"))),
        }
    }
}
