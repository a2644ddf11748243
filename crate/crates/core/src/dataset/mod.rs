//! Dataset ingestion, class merging, validation and stratified splits.

mod ingest;
mod merge;
mod split;
mod validate;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::util;
use crate::{Error, Result, TOOL_VERSION};

pub use ingest::{ingest_dataset, ingest_dataset_with, IngestOptions, ACCEPTED_EXTENSIONS};
pub use merge::{default_class_map, merge_manifests, ClassMap};
pub use split::{stratified_split, SplitAssignment, SplitRatios};
pub use validate::{load_expected_counts, published_counts, validate_manifest, ClassCheck, ValidationReport};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Benign,
    Early,
    Pre,
    Pro,
    Normal,
    Cancer,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 6] = [
        ClassLabel::Benign,
        ClassLabel::Early,
        ClassLabel::Pre,
        ClassLabel::Pro,
        ClassLabel::Normal,
        ClassLabel::Cancer,
    ];

    /// Binary class order used by models and reports.
    pub const BINARY: [ClassLabel; 2] = [ClassLabel::Normal, ClassLabel::Cancer];

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Benign => "Benign",
            ClassLabel::Early => "Early",
            ClassLabel::Pre => "Pre",
            ClassLabel::Pro => "Pro",
            ClassLabel::Normal => "Normal",
            ClassLabel::Cancer => "Cancer",
        }
    }

    pub fn is_merged_label(self) -> bool {
        matches!(self, ClassLabel::Normal | ClassLabel::Cancer)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceDataset {
    #[serde(rename = "ALL_IMAGE")]
    AllImage,
    #[serde(rename = "ALL_IDB1")]
    AllIdb1,
}

impl SourceDataset {
    pub fn prefix(self) -> &'static str {
        match self {
            SourceDataset::AllImage => "ALL_IMAGE",
            SourceDataset::AllIdb1 => "ALL_IDB1",
        }
    }

    /// Class directories a dataset of this kind may contain.
    pub fn classes(self) -> &'static [ClassLabel] {
        match self {
            SourceDataset::AllImage => &[
                ClassLabel::Benign,
                ClassLabel::Early,
                ClassLabel::Pre,
                ClassLabel::Pro,
            ],
            SourceDataset::AllIdb1 => &[ClassLabel::Normal, ClassLabel::Cancer],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub path: PathBuf,
    pub source_dataset: SourceDataset,
    pub original_class: ClassLabel,
    pub mapped_class: Option<ClassLabel>,
    pub split: Option<Split>,
}

impl SampleRecord {
    /// Class the record is counted under: the mapped class once merged.
    pub fn label(&self) -> ClassLabel {
        self.mapped_class.unwrap_or(self.original_class)
    }
}

/// Ordered set of samples with a class histogram that always matches them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<SampleRecord>,
    class_counts: BTreeMap<ClassLabel, usize>,
    created_with: String,
    warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    version: u32,
    created_with: String,
    records: Vec<SampleRecord>,
    class_counts: BTreeMap<ClassLabel, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

impl DatasetManifest {
    /// Builds a manifest, checking id/path uniqueness and mapped-class validity.
    ///
    /// `zero_classes` are listed in `class_counts` even when no record has them.
    pub fn from_records(
        records: Vec<SampleRecord>,
        zero_classes: &[ClassLabel],
        warnings: Vec<String>,
    ) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut paths = HashSet::new();
        for r in &records {
            if !ids.insert(r.sample_id.as_str()) {
                return Err(Error::DuplicateSampleId(r.sample_id.clone()));
            }
            if !paths.insert(r.path.as_path()) {
                return Err(Error::DuplicatePath(r.path.clone()));
            }
            if let Some(mapped) = r.mapped_class {
                if !mapped.is_merged_label() {
                    return Err(Error::InvalidMapTarget {
                        from: r.original_class.to_string(),
                        to: mapped.to_string(),
                    });
                }
            }
        }
        let mut class_counts: BTreeMap<ClassLabel, usize> =
            zero_classes.iter().map(|c| (*c, 0)).collect();
        for r in &records {
            *class_counts.entry(r.label()).or_insert(0) += 1;
        }
        Ok(DatasetManifest {
            records,
            class_counts,
            created_with: TOOL_VERSION.to_string(),
            warnings,
        })
    }

    pub fn empty() -> Self {
        DatasetManifest {
            records: Vec::new(),
            class_counts: BTreeMap::new(),
            created_with: TOOL_VERSION.to_string(),
            warnings: Vec::new(),
        }
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn class_counts(&self) -> &BTreeMap<ClassLabel, usize> {
        &self.class_counts
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.class_counts.get(&label).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.records.len()
    }

    pub fn created_with(&self) -> &str {
        &self.created_with
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records assigned to `split`, in manifest order.
    pub fn split_records(&self, split: Split) -> Vec<&SampleRecord> {
        self.records
            .iter()
            .filter(|r| r.split == Some(split))
            .collect()
    }

    /// Returns a copy whose records carry different paths (e.g. segmented outputs).
    pub fn with_paths<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&SampleRecord) -> PathBuf,
    {
        let records = self
            .records
            .iter()
            .map(|r| SampleRecord {
                path: f(r),
                ..r.clone()
            })
            .collect();
        let zero: Vec<ClassLabel> = self.class_counts.keys().copied().collect();
        let mut m = DatasetManifest::from_records(records, &zero, self.warnings.clone())?;
        m.created_with = self.created_with.clone();
        Ok(m)
    }

    /// Canonical JSON with paths relative to `base_dir`.
    pub fn to_json_bytes(&self, base_dir: &Path) -> Result<Vec<u8>> {
        let records = self
            .records
            .iter()
            .map(|r| {
                let rel = relative_to(&r.path, base_dir);
                SampleRecord {
                    path: PathBuf::from(path_to_slash(&rel)),
                    ..r.clone()
                }
            })
            .collect();
        util::to_json_bytes(&ManifestFile {
            version: MANIFEST_VERSION,
            created_with: self.created_with.clone(),
            records,
            class_counts: self.class_counts.clone(),
            warnings: self.warnings.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new("."));
        util::write_bytes(path, &self.to_json_bytes(base)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ManifestFile = util::read_json(path)?;
        let what = path.display().to_string();
        if file.version != MANIFEST_VERSION {
            return Err(Error::format(
                what,
                format!("unsupported manifest version {}", file.version),
            ));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let records = file
            .records
            .into_iter()
            .map(|r| SampleRecord {
                path: if r.path.is_absolute() {
                    r.path
                } else {
                    base.join(r.path)
                },
                ..r
            })
            .collect();
        let zero: Vec<ClassLabel> = file.class_counts.keys().copied().collect();
        let mut m = DatasetManifest::from_records(records, &zero, file.warnings)?;
        if m.class_counts != file.class_counts {
            return Err(Error::format(
                what,
                "class_counts does not match a recount of records",
            ));
        }
        m.created_with = file.created_with;
        Ok(m)
    }

    /// SHA-256 of the canonical serialization, independent of where the manifest lives.
    pub fn digest(&self) -> Result<String> {
        let records: Vec<_> = self
            .records
            .iter()
            .map(|r| (&r.sample_id, r.source_dataset, r.original_class, r.mapped_class, r.split))
            .collect();
        let bytes = serde_json::to_vec(&(records, &self.class_counts))
            .map_err(|e| Error::format("manifest", e))?;
        Ok(util::sha256_hex(&bytes))
    }
}

fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let abs = |p: &Path| -> PathBuf {
        std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
    };
    pathdiff::diff_paths(abs(path), abs(base)).unwrap_or_else(|| path.to_path_buf())
}

fn path_to_slash(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, class: ClassLabel) -> SampleRecord {
        SampleRecord {
            sample_id: id.to_string(),
            path: PathBuf::from(format!("/data/{id}.png")),
            source_dataset: SourceDataset::AllIdb1,
            original_class: class,
            mapped_class: None,
            split: None,
        }
    }

    #[test]
    fn counts_follow_records() {
        let m = DatasetManifest::from_records(
            vec![record("a", ClassLabel::Normal), record("b", ClassLabel::Cancer), record("c", ClassLabel::Cancer)],
            &[],
            vec![],
        )
        .unwrap();
        assert_eq!(m.count(ClassLabel::Normal), 1);
        assert_eq!(m.count(ClassLabel::Cancer), 2);
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn rejects_duplicates() {
        let err = DatasetManifest::from_records(
            vec![record("a", ClassLabel::Normal), record("a", ClassLabel::Cancer)],
            &[],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateSampleId(_)));

        let mut b = record("b", ClassLabel::Normal);
        b.path = PathBuf::from("/data/a.png");
        let err = DatasetManifest::from_records(vec![record("a", ClassLabel::Normal), b], &[], vec![])
            .unwrap_err();
        assert!(matches!(err, Error::DuplicatePath(_)));
    }

    #[test]
    fn json_round_trip_uses_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = record("x", ClassLabel::Normal);
        r.path = dir.path().join("imgs/Normal/x.png");
        let m = DatasetManifest::from_records(vec![r], &[], vec![]).unwrap();
        let path = dir.path().join("out/manifest.json");
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"../imgs/Normal/x.png\""), "{text}");
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back.records()[0].sample_id, "x");
        assert_eq!(back.digest().unwrap(), m.digest().unwrap());
    }

    #[test]
    fn load_rejects_tampered_counts() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::from_records(vec![record("a", ClassLabel::Normal)], &[], vec![]).unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace("\"Normal\": 1", "\"Normal\": 2");
        std::fs::write(&path, text).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!("Pro".parse::<ClassLabel>().unwrap(), ClassLabel::Pro);
        assert!("pro".parse::<ClassLabel>().is_err());
    }
}
