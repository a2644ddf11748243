use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClassLabel, DatasetManifest, SampleRecord, Split};
use crate::util::derived_rng;
use crate::{Error, Result};

/// Train / validation / test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::InvalidRatios(format!(
                "all ratios must be positive, got {a:?}"
            )));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub ratios: SplitRatios,
    pub seed: u64,
    pub assignments: BTreeMap<String, Split>,
    pub per_split_counts: BTreeMap<Split, BTreeMap<ClassLabel, usize>>,
}

impl SplitAssignment {
    /// Copy of `m` with each record's `split` set from this assignment.
    pub fn apply(&self, m: &DatasetManifest) -> Result<DatasetManifest> {
        let records = m
            .records()
            .iter()
            .map(|r| {
                let split = self.assignments.get(&r.sample_id).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!("no split assigned to `{}`", r.sample_id))
                })?;
                Ok(SampleRecord {
                    split: Some(split),
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let zero: Vec<ClassLabel> = m.class_counts().keys().copied().collect();
        DatasetManifest::from_records(records, &zero, m.warnings().to_vec())
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`; ties go to the lower index.
pub(crate) fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| {
        let q = n as f64 * r;
        // snap products like 6.999999999 back to the integer they represent
        if (q - q.round()).abs() < 1e-9 {
            q.round()
        } else {
            q
        }
    });
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        let fi = quotas[i] - quotas[i].floor();
        let fj = quotas[j] - quotas[j].floor();
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

pub fn stratified_split(m: &DatasetManifest, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    let mut by_class: BTreeMap<&'static str, Vec<&SampleRecord>> = BTreeMap::new();
    for r in m.records() {
        let class = r
            .mapped_class
            .ok_or_else(|| Error::MissingMappedClass(r.sample_id.clone()))?;
        by_class.entry(class.name()).or_default().push(r);
    }

    let mut assignments = BTreeMap::new();
    let mut per_split_counts: BTreeMap<Split, BTreeMap<ClassLabel, usize>> =
        Split::ALL.iter().map(|s| (*s, BTreeMap::new())).collect();

    for (name, mut members) in by_class {
        let class: ClassLabel = name.parse()?;
        if members.len() < Split::ALL.len() {
            return Err(Error::TooFewSamples {
                class: name.to_string(),
                count: members.len(),
                splits: Split::ALL.len(),
            });
        }
        members.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        let mut rng = derived_rng(seed, &[b"stratified_split", name.as_bytes()]);
        members.shuffle(&mut rng);

        let counts = apportion(members.len(), &ratios.as_array());
        let mut it = members.into_iter();
        for (split, n) in Split::ALL.into_iter().zip(counts) {
            for r in it.by_ref().take(n) {
                assignments.insert(r.sample_id.clone(), split);
            }
            per_split_counts.get_mut(&split).unwrap().insert(class, n);
        }
    }

    Ok(SplitAssignment {
        ratios,
        seed,
        assignments,
        per_split_counts,
    })
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use proptest::prelude::*;

    use super::*;
    use crate::dataset::SourceDataset;

    fn merged(normal: usize, cancer: usize) -> DatasetManifest {
        let mut records = Vec::new();
        for (class, n) in [(ClassLabel::Normal, normal), (ClassLabel::Cancer, cancer)] {
            for i in 0..n {
                let id = format!("ALL_IDB1/{class}/{i:05}.png");
                records.push(SampleRecord {
                    path: PathBuf::from(format!("/d/{id}")),
                    sample_id: id,
                    source_dataset: SourceDataset::AllIdb1,
                    original_class: class,
                    mapped_class: Some(class),
                    split: None,
                });
            }
        }
        DatasetManifest::from_records(records, &[], vec![]).unwrap()
    }

    #[test]
    fn toy_manifest_by_hand() {
        // 5 per class at 0.8/0.1/0.1: quotas 4.0/0.5/0.5, the spare sample goes to val
        let m = merged(5, 5);
        let s = stratified_split(&m, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 1).unwrap();
        for class in [ClassLabel::Normal, ClassLabel::Cancer] {
            assert_eq!(s.per_split_counts[&Split::Train][&class], 4);
            assert_eq!(s.per_split_counts[&Split::Val][&class], 1);
            assert_eq!(s.per_split_counts[&Split::Test][&class], 0);
        }
    }

    #[test]
    fn rejects_bad_ratios() {
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
        assert!(SplitRatios::new(0.5, 0.3, 0.3).is_err());
        assert!(SplitRatios::new(0.7, 0.15, 0.15).is_ok());
    }

    #[test]
    fn too_few_samples() {
        let m = merged(2, 5);
        let err = stratified_split(&m, SplitRatios::default(), 0).unwrap_err();
        assert!(matches!(err, Error::TooFewSamples { count: 2, .. }));
    }

    #[test]
    fn unmapped_records_rejected() {
        let mut m = merged(3, 3);
        let records: Vec<_> = m
            .records()
            .iter()
            .map(|r| SampleRecord { mapped_class: None, ..r.clone() })
            .collect();
        m = DatasetManifest::from_records(records, &[], vec![]).unwrap();
        assert!(matches!(
            stratified_split(&m, SplitRatios::default(), 0),
            Err(Error::MissingMappedClass(_))
        ));
    }

    #[test]
    fn apportion_matches_largest_remainder() {
        assert_eq!(apportion(10, &[0.7, 0.15, 0.15]), [7, 2, 1]);
        assert_eq!(apportion(563, &[0.7, 0.15, 0.15]), [394, 85, 84]);
        assert_eq!(apportion(4, &[0.98, 0.01, 0.01]), [4, 0, 0]);
    }

    proptest! {
        #[test]
        fn split_partitions_and_stays_within_one(
            normal in 3usize..60,
            cancer in 3usize..60,
            a in 0.05f64..1.0,
            b in 0.05f64..1.0,
            c in 0.05f64..1.0,
            seed in any::<u64>(),
        ) {
            let sum = a + b + c;
            let ratios = SplitRatios { train: a / sum, val: b / sum, test: 1.0 - a / sum - b / sum };
            prop_assume!(ratios.validate().is_ok());
            let m = merged(normal, cancer);
            let s = stratified_split(&m, ratios, seed).unwrap();
            prop_assert_eq!(s.assignments.len(), m.total());
            for class in [ClassLabel::Normal, ClassLabel::Cancer] {
                let n = m.count(class) as f64;
                for (split, r) in Split::ALL.into_iter().zip(ratios.as_array()) {
                    let got = m.records().iter()
                        .filter(|x| x.mapped_class == Some(class) && s.assignments[&x.sample_id] == split)
                        .count();
                    prop_assert_eq!(got, s.per_split_counts[&split][&class]);
                    prop_assert!((got as f64 - n * r).abs() <= 1.0);
                }
            }
            let again = stratified_split(&m, ratios, seed).unwrap();
            prop_assert_eq!(s, again);
        }
    }
}
