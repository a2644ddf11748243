use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassLabel, DatasetManifest, SourceDataset};
use crate::{util, Error, Result};

/// Published per-class image counts of the two source datasets.
pub fn published_counts(kind: SourceDataset) -> BTreeMap<ClassLabel, usize> {
    use ClassLabel::*;
    match kind {
        SourceDataset::AllImage => [(Benign, 504), (Early, 985), (Pre, 963), (Pro, 804)]
            .into_iter()
            .collect(),
        SourceDataset::AllIdb1 => [(Normal, 59), (Cancer, 49)].into_iter().collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCheck {
    pub class: ClassLabel,
    pub expected: usize,
    pub actual: usize,
    /// `actual - expected`
    pub delta: i64,
}

impl ClassCheck {
    pub fn matches(&self) -> bool {
        self.delta == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ClassCheck>,
    pub passed: bool,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &ClassCheck> {
        self.checks.iter().filter(|c| !c.matches())
    }
}

pub fn validate_manifest(
    m: &DatasetManifest,
    expected: &BTreeMap<ClassLabel, usize>,
) -> ValidationReport {
    let checks: Vec<ClassCheck> = expected
        .iter()
        .map(|(class, &want)| {
            let actual = m.count(*class);
            ClassCheck {
                class: *class,
                expected: want,
                actual,
                delta: actual as i64 - want as i64,
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if expected.is_empty() {
        warnings.push("no expected counts given; validation is vacuous".to_string());
    }
    for (class, n) in m.class_counts() {
        if *n > 0 && !expected.contains_key(class) {
            warnings.push(format!("class {class} has {n} samples but no expected count"));
        }
    }
    ValidationReport {
        passed: checks.iter().all(ClassCheck::matches),
        checks,
        warnings,
    }
}

/// Reads a `{class_name: count}` JSON map.
pub fn load_expected_counts(path: &Path) -> Result<BTreeMap<ClassLabel, usize>> {
    let raw: BTreeMap<String, usize> = util::read_json(path)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<ClassLabel>()
                .map(|c| (c, v))
                .map_err(|_| Error::format(path.display().to_string(), format!("unknown class `{k}`")))
        })
        .collect()
}
