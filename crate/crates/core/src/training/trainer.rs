//! The fine-tuning loop and its per-epoch history.

use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backend::{argmax, softmax, BackwardPass, ClassifierBackend, ParamGroup};
use super::optimizer::Optimizer;
use super::reference_cnn::ReferenceCnn;
use crate::augmentation::AugmentationPipeline;
use crate::dataset::ClassLabel;
use crate::util::{derived_rng, read_to_string, write_bytes};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(rename = "optimizer")]
    pub optimizer_name: String,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub freeze_backbone_epochs: usize,
    pub seed: u64,
    pub input_resolution: u32,
    pub backend: String,
    /// Weights to start from; random initialization when unset.
    pub pretrained: Option<PathBuf>,
    /// Run on one thread and record zero wall time so histories are byte-identical.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            optimizer_name: "adamw".into(),
            learning_rate: 0.000714,
            weight_decay: 0.01,
            batch_size: 32,
            freeze_backbone_epochs: 0,
            seed: 0,
            input_resolution: 224,
            backend: ReferenceCnn::NAME.into(),
            pretrained: None,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate == 0.0 {
            return Err(Error::Config("training: learning_rate must be positive, got 0".into()));
        }
        self.check()
    }

    /// Everything [`validate`](Self::validate) checks, except that a zero
    /// learning rate passes: the loop then runs as a parameter-preserving dry run.
    fn check(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("training: {msg}")));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.freeze_backbone_epochs > self.epochs {
            return fail(format!(
                "freeze_backbone_epochs ({}) exceeds epochs ({})",
                self.freeze_backbone_epochs, self.epochs
            ));
        }
        if self.input_resolution < 2 {
            return fail("input_resolution must be at least 2".into());
        }
        if !["adamw", "sgd"].contains(&self.optimizer_name.to_ascii_lowercase().as_str()) {
            return fail(format!("unknown optimizer {:?}", self.optimizer_name));
        }
        Ok(())
    }
}

/// A decoded training or validation image at the backend's input resolution.
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub sample_id: String,
    pub label: ClassLabel,
    pub image: RgbImage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

const HISTORY_HEADER: [&str; 6] = ["epoch", "train_loss", "val_loss", "train_accuracy", "val_accuracy", "wall_time_s"];

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks numbering 1..=n, finite non-negative losses and accuracies in [0, 1].
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            let bad = |msg: &str| Err(Error::format("history", format!("epoch {}: {msg}", r.epoch)));
            if r.epoch != i + 1 {
                return bad("epochs must be numbered 1..n without gaps");
            }
            if !(r.train_loss.is_finite() && r.train_loss >= 0.0 && r.val_loss.is_finite() && r.val_loss >= 0.0) {
                return bad("losses must be finite and non-negative");
            }
            if !((0.0..=1.0).contains(&r.train_accuracy) && (0.0..=1.0).contains(&r.val_accuracy)) {
                return bad("accuracies must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// CSV with shortest round-trip float formatting, so parsing restores every bit.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::format("history csv", e);
        w.write_record(HISTORY_HEADER).map_err(err)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.train_accuracy.to_string(),
                r.val_accuracy.to_string(),
                r.wall_time_s.to_string(),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::format("history csv", e.to_string()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(|e| Error::format("history csv", e))?;
        if header.iter().ne(HISTORY_HEADER) {
            return Err(Error::format("history csv", format!("unexpected header {header:?}")));
        }
        let mut records = Vec::new();
        for row in r.records() {
            let row = row.map_err(|e| Error::format("history csv", e))?;
            let num = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|_| Error::format("history csv", format!("bad number {:?}", &row[i])))
            };
            records.push(EpochRecord {
                epoch: row[0]
                    .parse()
                    .map_err(|_| Error::format("history csv", format!("bad epoch {:?}", &row[0])))?,
                train_loss: num(1)?,
                val_loss: num(2)?,
                train_accuracy: num(3)?,
                val_accuracy: num(4)?,
                wall_time_s: num(5)?,
            });
        }
        Ok(TrainingHistory { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_csv()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(read_to_string(path)?.as_bytes())
    }
}

/// Result of [`fine_tune`]: the best-validation checkpoint and the full history.
#[derive(Debug)]
pub struct FineTuneOutcome {
    pub backend: Box<dyn ClassifierBackend>,
    pub history: TrainingHistory,
    /// 1-based epoch whose weights `backend` holds.
    pub best_epoch: usize,
}

/// Trains `backend` on `train`, validating on `val` after every epoch.
///
/// Labels are mapped to head indices through `class_order`. Per-sample
/// gradients are computed in parallel but summed in sample order, so results
/// do not depend on the thread count.
pub fn fine_tune(
    backend: Box<dyn ClassifierBackend>,
    train: &[LoadedSample],
    val: &[LoadedSample],
    class_order: &[ClassLabel],
    config: &TrainConfig,
    augment: &AugmentationPipeline,
) -> Result<FineTuneOutcome> {
    fine_tune_observed(backend, train, val, class_order, config, augment, |_, _| {})
}

/// [`fine_tune`] with a callback invoked after each epoch's updates.
pub fn fine_tune_observed<F>(
    backend: Box<dyn ClassifierBackend>,
    train: &[LoadedSample],
    val: &[LoadedSample],
    class_order: &[ClassLabel],
    config: &TrainConfig,
    augment: &AugmentationPipeline,
    mut observe: F,
) -> Result<FineTuneOutcome>
where
    F: FnMut(usize, &dyn ClassifierBackend) + Send,
{
    config.check()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("val".into()));
    }
    if backend.num_classes() != class_order.len() {
        return Err(Error::InvalidArgument(format!(
            "backend has {} outputs but the class order lists {} classes",
            backend.num_classes(),
            class_order.len()
        )));
    }
    let target_of = |s: &LoadedSample| -> Result<usize> {
        class_order
            .iter()
            .position(|c| *c == s.label)
            .ok_or_else(|| Error::Sample {
                sample_id: s.sample_id.clone(),
                source: Box::new(Error::UnknownLabel(s.label.to_string())),
            })
    };
    let train_targets = train.iter().map(target_of).collect::<Result<Vec<_>>>()?;
    let val_targets = val.iter().map(target_of).collect::<Result<Vec<_>>>()?;

    let threads = if config.deterministic { 1 } else { 0 };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    pool.install(|| {
        let mut backend = backend;
        let mut optimizer = Optimizer::new(
            &config.optimizer_name,
            config.learning_rate,
            config.weight_decay,
            backend.parameters(),
        )?;
        let partners: Vec<(ClassLabel, &RgbImage)> = train.iter().map(|s| (s.label, &s.image)).collect();
        let resolution = backend.input_resolution();
        let mut history = TrainingHistory::default();
        let mut best: Option<(usize, f64, f64, Box<dyn ClassifierBackend>)> = None;

        for epoch in 1..=config.epochs {
            let started = Instant::now();
            let ctx = |e: Error| Error::Training {
                epoch,
                message: e.to_string(),
            };
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut derived_rng(config.seed, &[b"epoch_order", &(epoch as u64).to_le_bytes()]));
            let frozen: &[ParamGroup] = if epoch <= config.freeze_backbone_epochs {
                &[ParamGroup::Backbone]
            } else {
                &[]
            };

            let (mut loss_sum, mut correct) = (0.0, 0usize);
            for batch in order.chunks(config.batch_size) {
                let passes: Vec<BackwardPass> = batch
                    .par_iter()
                    .map(|&i| -> Result<BackwardPass> {
                        let s = &train[i];
                        let image = if augment.is_identity() {
                            s.image.clone()
                        } else {
                            let out = augment.apply(&s.image, s.label, &s.sample_id, epoch as u64, &partners)?;
                            super::backend::fit_resolution(&out, resolution)
                        };
                        backend.backward(&image, train_targets[i]).map_err(|e| Error::Sample {
                            sample_id: s.sample_id.clone(),
                            source: Box::new(e),
                        })
                    })
                    .collect::<Result<_>>()
                    .map_err(ctx)?;

                let mut grads: Vec<Vec<f64>> = backend.parameters().iter().map(|p| vec![0.0; p.values.len()]).collect();
                for (pass, &i) in passes.iter().zip(batch) {
                    if !pass.loss.is_finite() {
                        return Err(ctx(Error::InvalidArgument(format!(
                            "non-finite loss on {}",
                            train[i].sample_id
                        ))));
                    }
                    loss_sum += pass.loss;
                    if argmax(&pass.logits) == train_targets[i] {
                        correct += 1;
                    }
                    for (acc, g) in grads.iter_mut().zip(&pass.gradients) {
                        for (a, v) in acc.iter_mut().zip(g) {
                            *a += v;
                        }
                    }
                }
                let scale = 1.0 / batch.len() as f64;
                for g in grads.iter_mut().flatten() {
                    *g *= scale;
                }
                optimizer.step(backend.parameters_mut(), &grads, frozen);
            }
            observe(epoch, backend.as_ref());

            let (val_loss, val_accuracy) = evaluate_loss(backend.as_ref(), val, &val_targets).map_err(ctx)?;
            let record = EpochRecord {
                epoch,
                train_loss: loss_sum / train.len() as f64,
                val_loss,
                train_accuracy: correct as f64 / train.len() as f64,
                val_accuracy,
                wall_time_s: if config.deterministic {
                    0.0
                } else {
                    started.elapsed().as_secs_f64()
                },
            };
            log::info!(
                "epoch {epoch}/{}: train_loss {:.4} train_acc {:.4} val_loss {:.4} val_acc {:.4}",
                config.epochs,
                record.train_loss,
                record.train_accuracy,
                record.val_loss,
                record.val_accuracy
            );
            let improved = match &best {
                None => true,
                Some((_, acc, loss, _)) => val_accuracy > *acc || (val_accuracy == *acc && val_loss < *loss),
            };
            if improved {
                best = Some((epoch, val_accuracy, val_loss, backend.clone()));
            }
            history.records.push(record);
        }

        let (best_epoch, _, _, best_backend) = best.expect("at least one epoch ran");
        Ok(FineTuneOutcome {
            backend: best_backend,
            history,
            best_epoch,
        })
    })
}

/// Mean cross-entropy and top-1 accuracy without augmentation.
fn evaluate_loss(backend: &dyn ClassifierBackend, samples: &[LoadedSample], targets: &[usize]) -> Result<(f64, f64)> {
    let outcomes: Vec<(f64, bool)> = samples
        .par_iter()
        .zip(targets)
        .map(|(s, &t)| -> Result<(f64, bool)> {
            let logits = backend.logits(&s.image).map_err(|e| Error::Sample {
                sample_id: s.sample_id.clone(),
                source: Box::new(e),
            })?;
            let p = softmax(&logits);
            Ok((-p[t].max(f64::MIN_POSITIVE).ln(), argmax(&logits) == t))
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let loss = outcomes.iter().map(|o| o.0).sum::<f64>() / n;
    let acc = outcomes.iter().filter(|o| o.1).count() as f64 / n;
    Ok((loss, acc))
}

#[cfg(test)]
mod tests {
    use image::Rgb;

    use super::*;
    use crate::training::{load_backend, BackendSpec};
    use crate::util::sha256_hex;

    fn toy(res: u32) -> Vec<LoadedSample> {
        let colors = [
            (ClassLabel::Normal, [230, 60, 60]),
            (ClassLabel::Normal, [200, 90, 40]),
            (ClassLabel::Cancer, [40, 60, 220]),
            (ClassLabel::Cancer, [70, 30, 190]),
        ];
        colors
            .iter()
            .enumerate()
            .map(|(i, (label, c))| LoadedSample {
                sample_id: format!("s{i}"),
                label: *label,
                image: RgbImage::from_pixel(res, res, Rgb(*c)),
            })
            .collect()
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: 0.01,
            batch_size: 2,
            input_resolution: 8,
            seed: 5,
            deterministic: true,
            ..TrainConfig::default()
        }
    }

    fn group_digest(b: &dyn ClassifierBackend, group: ParamGroup) -> String {
        let bytes: Vec<u8> = b
            .parameters()
            .iter()
            .filter(|p| p.group == group)
            .flat_map(|p| p.values.iter().flat_map(|v| v.to_le_bytes()))
            .collect();
        sha256_hex(&bytes)
    }

    fn run(cfg: &TrainConfig) -> FineTuneOutcome {
        let data = toy(8);
        let backend = load_backend(&BackendSpec::reference(2, 8, cfg.seed)).unwrap();
        fine_tune(backend, &data, &data, &ClassLabel::BINARY, cfg, &AugmentationPipeline::default()).unwrap()
    }

    #[test]
    fn defaults_follow_recipe() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.optimizer_name.as_str(), c.learning_rate), (100, "adamw", 0.000714));
        assert_eq!(c.freeze_backbone_epochs, 0);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        for bad in [
            TrainConfig { epochs: 0, ..config(1) },
            TrainConfig { learning_rate: 0.0, ..config(1) },
            TrainConfig { freeze_backbone_epochs: 2, ..config(1) },
            TrainConfig { optimizer_name: "rmsprop".into(), ..config(1) },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn history_shape_and_determinism() {
        let a = run(&config(6));
        let b = run(&config(6));
        assert_eq!(a.history.len(), 6);
        a.history.validate().unwrap();
        assert_eq!(a.history.to_csv().unwrap(), b.history.to_csv().unwrap());
        assert_eq!(a.backend.parameters(), b.backend.parameters());
    }

    #[test]
    fn freeze_keeps_backbone_fixed() {
        let data = toy(8);
        let cfg = TrainConfig {
            freeze_backbone_epochs: 3,
            ..config(5)
        };
        let backend = load_backend(&BackendSpec::reference(2, 8, cfg.seed)).unwrap();
        let initial_backbone = group_digest(backend.as_ref(), ParamGroup::Backbone);
        let mut seen = Vec::new();
        fine_tune_observed(backend, &data, &data, &ClassLabel::BINARY, &cfg, &AugmentationPipeline::default(), |_, b| {
            seen.push((group_digest(b, ParamGroup::Backbone), group_digest(b, ParamGroup::Head)))
        })
        .unwrap();
        for e in 0..3 {
            assert_eq!(seen[e].0, initial_backbone);
            if e > 0 {
                assert_ne!(seen[e].1, seen[e - 1].1);
            }
        }
        assert_ne!(seen[3].0, initial_backbone);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = toy(8);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..config(3)
        };
        assert!(cfg.validate().is_err());
        let backend = load_backend(&BackendSpec::reference(2, 8, cfg.seed)).unwrap();
        let initial = backend.parameters().to_vec();
        let out = fine_tune(backend, &data, &data, &ClassLabel::BINARY, &cfg, &AugmentationPipeline::default()).unwrap();
        assert_eq!(out.backend.parameters(), &initial[..]);
        assert_eq!(out.history.len(), 3);
    }

    #[test]
    fn empty_split_is_rejected() {
        let data = toy(8);
        let backend = load_backend(&BackendSpec::reference(2, 8, 0)).unwrap();
        let err = fine_tune(backend, &[], &data, &ClassLabel::BINARY, &config(1), &AugmentationPipeline::default()).unwrap_err();
        assert!(matches!(err, Error::EmptySplit(_)));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let h = TrainingHistory {
            records: (1..=3)
                .map(|e| EpochRecord {
                    epoch: e,
                    train_loss: 1.0 / (e as f64 * 3.0),
                    val_loss: 0.1 + f64::EPSILON,
                    train_accuracy: 2.0 / 3.0,
                    val_accuracy: 1.0,
                    wall_time_s: 1e-7,
                })
                .collect(),
        };
        let back = TrainingHistory::from_csv(&h.to_csv().unwrap()).unwrap();
        assert_eq!(back, h);
        let text = String::from_utf8(h.to_csv().unwrap()).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_loss,train_accuracy,val_accuracy,wall_time_s\n"));
    }
}
