//! The single TOML document that drives every stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmentation::{build_pipeline, AugmentationConfig};
use crate::dataset::{default_class_map, published_counts, ClassLabel, ClassMap, SourceDataset, Split, SplitRatios};
use crate::segmentation::SegmentationConfig;
use crate::training::TrainConfig;
use crate::util::{read_to_string, sha256_hex};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub all_image_root: Option<PathBuf>,
    pub all_idb1_root: Option<PathBuf>,
    pub class_map: ClassMap,
    pub ratios: SplitRatios,
    /// Decode image headers during ingest; disable for placeholder trees.
    pub verify_images: bool,
    /// Per-source expected class counts; the published counts when absent.
    pub expected_counts: Option<BTreeMap<SourceDataset, BTreeMap<ClassLabel, usize>>>,
    /// Fail `prepare` when counts differ from the expected ones instead of warning.
    pub strict_counts: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            all_image_root: None,
            all_idb1_root: None,
            class_map: default_class_map(),
            ratios: SplitRatios::default(),
            verify_images: true,
            expected_counts: None,
            strict_counts: false,
        }
    }
}

impl DatasetSection {
    pub fn expected_for(&self, kind: SourceDataset) -> BTreeMap<ClassLabel, usize> {
        match &self.expected_counts {
            Some(map) => map.get(&kind).cloned().unwrap_or_default(),
            None => published_counts(kind),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Split scored by `evaluate`.
    pub split: Split,
    /// Split used for per-epoch validation and checkpoint selection.
    pub validation_split: Split,
    pub positive_class: ClassLabel,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            split: Split::Test,
            validation_split: Split::Val,
            positive_class: ClassLabel::Cancer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// CSV of prior-work rows; the bundled table when absent.
    pub comparison_rows: Option<PathBuf>,
    pub study: String,
    /// Methodology cell of the appended row; the backend name when absent.
    pub methodology: Option<String>,
    pub dataset: String,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            comparison_rows: None,
            study: "blastscan".into(),
            methodology: None,
            dataset: "ALL-IDB1 + ALL dataset".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Every stage seed (split, augmentation, initialization) derives from this.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetSection,
    pub segmentation: SegmentationConfig,
    pub augmentation: AugmentationConfig,
    pub training: TrainConfig,
    pub evaluation: EvaluationSection,
    pub report: ReportSection,
    /// Directory relative paths are resolved against (the config file's directory).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            dataset: DatasetSection::default(),
            segmentation: SegmentationConfig::default(),
            augmentation: AugmentationConfig::default(),
            training: TrainConfig::default(),
            evaluation: EvaluationSection::default(),
            report: ReportSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.apply_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format("config", e))
    }

    /// Sets the global seed and propagates it to the stage sections.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.training.seed = seed;
        self.augmentation.seed = seed;
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    /// Checks every section and that referenced input paths exist.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.all_image_root.is_none() && d.all_idb1_root.is_none() {
            return Err(Error::Config("dataset: set all_image_root and/or all_idb1_root".into()));
        }
        for root in [&d.all_image_root, &d.all_idb1_root].into_iter().flatten() {
            let p = self.resolve(root);
            if !p.is_dir() {
                return Err(Error::Config(format!("dataset root {} is not a directory", p.display())));
            }
        }
        d.ratios.validate()?;
        for (from, to) in &d.class_map {
            if !to.is_merged_label() {
                return Err(Error::InvalidMapTarget {
                    from: from.to_string(),
                    to: to.to_string(),
                });
            }
        }
        self.segmentation.validate()?;
        build_pipeline(&self.augmentation)?;
        self.training.validate()?;
        if self.evaluation.split == Split::Train {
            log::warn!("evaluating on the training split");
        }
        if let Some(p) = &self.training.pretrained {
            if !self.resolve(p).is_file() {
                return Err(Error::Config(format!("pretrained weights {} not found", self.resolve(p).display())));
            }
        }
        if let Some(p) = &self.report.comparison_rows {
            if !self.resolve(p).is_file() {
                return Err(Error::Config(format!("comparison rows {} not found", self.resolve(p).display())));
            }
        }
        Ok(())
    }

    /// Digest of the effective settings, excluding the output location.
    pub fn digest(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canon).map_err(|e| Error::format("config", e))?;
        Ok(sha256_hex(&bytes))
    }

    /// Merged labels in head order: the sorted distinct class-map targets.
    pub fn class_order(&self) -> Vec<ClassLabel> {
        let mut labels: Vec<ClassLabel> = self.dataset.class_map.values().copied().collect();
        labels.sort();
        labels.dedup();
        labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_minimal_document() {
        let cfg = PipelineConfig::from_toml("seed = 9\n[dataset]\nall_idb1_root = \"idb\"\n", Path::new("/x")).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.training.seed, 9);
        assert_eq!(cfg.augmentation.seed, 9);
        assert_eq!(cfg.training.learning_rate, 0.000714);
        assert_eq!(cfg.out_dir(), PathBuf::from("/x/out"));
        assert_eq!(cfg.class_order(), vec![ClassLabel::Normal, ClassLabel::Cancer]);
        assert_eq!(cfg.dataset.expected_for(SourceDataset::AllIdb1)[&ClassLabel::Normal], 59);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml("[training]\nepochz = 3\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
    }

    #[test]
    fn full_document_round_trips() {
        let text = r#"
seed = 3
out_dir = "run"

[dataset]
all_image_root = "a"
all_idb1_root = "b"
verify_images = false
ratios = { train = 0.6, val = 0.2, test = 0.2 }

[dataset.class_map]
Benign = "Normal"
Normal = "Normal"
Early = "Cancer"
Pre = "Cancer"
Pro = "Cancer"
Cancer = "Cancer"

[dataset.expected_counts.ALL_IDB1]
Normal = 2
Cancer = 3

[segmentation]
hue_min = 200.0
debug_masks = true

[[augmentation.specs]]
kind = "hflip"
probability = 0.5

[[augmentation.specs]]
kind = "randaugment"
params = { n = 2, m = 9 }

[training]
epochs = 5
optimizer = "adamw"
input_resolution = 32

[evaluation]
split = "val"
"#;
        let cfg = PipelineConfig::from_toml(text, Path::new(".")).unwrap();
        assert_eq!(cfg.training.epochs, 5);
        assert_eq!(cfg.augmentation.specs.len(), 2);
        assert_eq!(cfg.evaluation.split, Split::Val);
        assert_eq!(cfg.dataset.expected_for(SourceDataset::AllImage).len(), 0);
        let again = PipelineConfig::from_toml(&cfg.to_toml().unwrap(), Path::new(".")).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.digest().unwrap(), cfg.digest().unwrap());
    }
}
