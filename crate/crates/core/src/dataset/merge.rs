use std::collections::BTreeMap;

use super::{ClassLabel, DatasetManifest, SampleRecord};
use crate::{Error, Result};

pub type ClassMap = BTreeMap<ClassLabel, ClassLabel>;

/// Benign and Normal become `Normal`; Early, Pre, Pro and Cancer become `Cancer`.
pub fn default_class_map() -> ClassMap {
    use ClassLabel::*;
    [
        (Benign, Normal),
        (Normal, Normal),
        (Early, Cancer),
        (Pre, Cancer),
        (Pro, Cancer),
        (Cancer, Cancer),
    ]
    .into_iter()
    .collect()
}

/// Concatenates `a` and `b`, setting every record's mapped class from `class_map`.
pub fn merge_manifests(
    a: &DatasetManifest,
    b: &DatasetManifest,
    class_map: &ClassMap,
) -> Result<DatasetManifest> {
    for (from, to) in class_map {
        if !to.is_merged_label() {
            return Err(Error::InvalidMapTarget {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
    }

    let mut records = Vec::with_capacity(a.total() + b.total());
    for r in a.records().iter().chain(b.records()) {
        let mapped = class_map
            .get(&r.original_class)
            .copied()
            .ok_or_else(|| Error::UnmappedClass(r.original_class.to_string()))?;
        records.push(SampleRecord {
            mapped_class: Some(mapped),
            ..r.clone()
        });
    }

    let mut targets: Vec<ClassLabel> = class_map.values().copied().collect();
    targets.dedup();
    let warnings = a.warnings().iter().chain(b.warnings()).cloned().collect();
    DatasetManifest::from_records(records, &targets, warnings)
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;
    use crate::dataset::SourceDataset;

    fn manifest(source: SourceDataset, counts: &[(ClassLabel, usize)]) -> DatasetManifest {
        let mut records = Vec::new();
        for (class, n) in counts {
            for i in 0..*n {
                let id = format!("{}/{class}/{i:04}.png", source.prefix());
                records.push(SampleRecord {
                    path: PathBuf::from(format!("/x/{id}")),
                    sample_id: id,
                    source_dataset: source,
                    original_class: *class,
                    mapped_class: None,
                    split: None,
                });
            }
        }
        DatasetManifest::from_records(records, &[], vec![]).unwrap()
    }

    #[test]
    fn merge_conserves_counts() {
        use ClassLabel::*;
        let a = manifest(SourceDataset::AllImage, &[(Benign, 5), (Early, 3), (Pre, 2), (Pro, 1)]);
        let b = manifest(SourceDataset::AllIdb1, &[(Normal, 4), (Cancer, 6)]);
        let m = merge_manifests(&a, &b, &default_class_map()).unwrap();
        assert_eq!(m.total(), a.total() + b.total());
        assert_eq!(m.count(Normal), 9);
        assert_eq!(m.count(Cancer), 12);
        assert_eq!(m.class_counts().len(), 2);
        assert!(m.records().iter().all(|r| r.mapped_class.is_some()));
        let idb = m
            .records()
            .iter()
            .filter(|r| r.source_dataset == SourceDataset::AllIdb1)
            .count();
        assert_eq!(idb, 10);
    }

    #[test]
    fn empty_second_input_is_identity_with_mapping() {
        let a = manifest(SourceDataset::AllIdb1, &[(ClassLabel::Normal, 2), (ClassLabel::Cancer, 1)]);
        let m = merge_manifests(&a, &DatasetManifest::empty(), &default_class_map()).unwrap();
        assert_eq!(m.total(), 3);
        for (x, y) in m.records().iter().zip(a.records()) {
            assert_eq!(x.sample_id, y.sample_id);
            assert_eq!(x.mapped_class, Some(y.original_class));
        }
    }

    #[test]
    fn missing_mapping_is_named() {
        let a = manifest(SourceDataset::AllImage, &[(ClassLabel::Pro, 1)]);
        let mut map = default_class_map();
        map.remove(&ClassLabel::Pro);
        let err = merge_manifests(&a, &DatasetManifest::empty(), &map).unwrap_err();
        assert_eq!(err.to_string(), "unmapped class: Pro");
    }

    #[test]
    fn invalid_target_and_collisions() {
        let a = manifest(SourceDataset::AllIdb1, &[(ClassLabel::Normal, 1)]);
        let mut map = default_class_map();
        map.insert(ClassLabel::Normal, ClassLabel::Benign);
        assert!(matches!(
            merge_manifests(&a, &DatasetManifest::empty(), &map),
            Err(Error::InvalidMapTarget { .. })
        ));
        let err = merge_manifests(&a, &a, &default_class_map()).unwrap_err();
        assert!(matches!(err, Error::DuplicateSampleId(_)));
    }
}
