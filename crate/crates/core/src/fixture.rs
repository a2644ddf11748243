//! Synthetic dataset trees for tests, demos and the `make-fixture` command.
//!
//! Images imitate stained smears: a pink background, pale red cells and one
//! purple nucleus. Cancer samples get a much larger nucleus than Normal ones,
//! so the two merged classes are learnable after segmentation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::augmentation::{AugmentationConfig, RawSpec};
use crate::dataset::{ClassLabel, SourceDataset, SplitRatios};
use crate::pipeline::PipelineConfig;
use crate::training::TrainConfig;
use crate::util::{derived_rng, write_bytes};
use crate::{Error, Result};

pub const BACKGROUND: Rgb<u8> = Rgb([230, 200, 210]);
pub const RED_CELL: Rgb<u8> = Rgb([220, 120, 130]);
pub const NUCLEUS: Rgb<u8> = Rgb([120, 60, 170]);

pub const CONFIG_FILE: &str = "blastscan.toml";

fn jitter(c: Rgb<u8>, rng: &mut ChaCha8Rng, amount: i16) -> Rgb<u8> {
    Rgb(c.0.map(|v| (v as i16 + rng.random_range(-amount..=amount)).clamp(0, 255) as u8))
}

fn disc(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(x, y, color);
            }
        }
    }
}

/// One synthetic smear; the nucleus radius depends on the merged class of `label`.
pub fn smear_image(label: ClassLabel, size: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let s = size as f64;
    let mut img = RgbImage::from_fn(size, size, |_, _| BACKGROUND);
    for p in img.pixels_mut() {
        *p = jitter(*p, rng, 4);
    }
    for _ in 0..rng.random_range(3..6) {
        let (cx, cy) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        disc(&mut img, cx, cy, s * rng.random_range(0.08..0.12), RED_CELL);
    }
    let radius = match label {
        ClassLabel::Normal | ClassLabel::Benign => s * rng.random_range(0.09..0.13),
        _ => s * rng.random_range(0.25..0.32),
    };
    let margin = radius + 1.0;
    let cx = rng.random_range(margin..(s - margin).max(margin + 1e-6));
    let cy = rng.random_range(margin..(s - margin).max(margin + 1e-6));
    disc(&mut img, cx, cy, radius, NUCLEUS);
    for p in img.pixels_mut() {
        if *p == NUCLEUS {
            *p = jitter(*p, rng, 6);
        }
    }
    img
}

fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| Error::format(path.display().to_string(), e))?;
    write_bytes(path, &bytes)
}

/// Writes a class-per-directory tree with `counts[class]` smears per class.
pub fn write_smear_tree(root: &Path, counts: &BTreeMap<ClassLabel, usize>, size: u32, seed: u64) -> Result<()> {
    for (class, &n) in counts {
        let mut rng = derived_rng(seed, &[b"fixture", class.name().as_bytes()]);
        for i in 0..n {
            let img = smear_image(*class, size, &mut rng);
            write_png(&img, &root.join(class.name()).join(format!("{}_{i:03}.png", class.name().to_lowercase())))?;
        }
    }
    Ok(())
}

/// Writes `counts[class]` zero-byte `.jpg` files per class directory.
pub fn write_placeholder_tree(root: &Path, counts: &BTreeMap<ClassLabel, usize>) -> Result<()> {
    for (class, &n) in counts {
        for i in 0..n {
            write_bytes(&root.join(class.name()).join(format!("img_{i:04}.jpg")), &[])?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub all_image_root: Option<PathBuf>,
    pub all_idb1_root: Option<PathBuf>,
    pub config: PathBuf,
}

fn counts(pairs: &[(ClassLabel, usize)]) -> BTreeMap<ClassLabel, usize> {
    pairs.iter().copied().collect()
}

fn write_config(root: &Path, cfg: &PipelineConfig) -> Result<PathBuf> {
    let path = root.join(CONFIG_FILE);
    write_bytes(&path, cfg.to_toml()?.as_bytes())?;
    Ok(path)
}

fn spec(kind: &str, params: serde_json::Value, probability: f64) -> RawSpec {
    RawSpec {
        kind: kind.into(),
        params,
        probability,
    }
}

/// Small two-source smear corpus plus a config that runs every stage in seconds.
pub fn write_toy_fixture(root: &Path, seed: u64) -> Result<FixturePaths> {
    use ClassLabel::*;
    let image_counts = counts(&[(Benign, 4), (Early, 4), (Pre, 4), (Pro, 4)]);
    let idb1_counts = counts(&[(Normal, 10), (Cancer, 4)]);
    let all_image = root.join("ALL_IMAGE");
    let all_idb1 = root.join("ALL_IDB1");
    write_smear_tree(&all_image, &image_counts, 48, seed)?;
    write_smear_tree(&all_idb1, &idb1_counts, 48, seed.wrapping_add(1))?;

    let mut cfg = PipelineConfig::default();
    cfg.apply_seed(seed);
    cfg.dataset.all_image_root = Some(PathBuf::from("ALL_IMAGE"));
    cfg.dataset.all_idb1_root = Some(PathBuf::from("ALL_IDB1"));
    cfg.dataset.ratios = SplitRatios::new(0.6, 0.2, 0.2)?;
    cfg.dataset.expected_counts = Some(
        [(SourceDataset::AllImage, image_counts), (SourceDataset::AllIdb1, idb1_counts)]
            .into_iter()
            .collect(),
    );
    cfg.segmentation.debug_masks = true;
    cfg.augmentation = AugmentationConfig {
        seed,
        specs: vec![
            spec("hflip", json!({}), 0.5),
            spec("vflip", json!({}), 0.5),
            spec("rotate", json!({"min_degrees": -15.0, "max_degrees": 15.0}), 0.3),
            spec("mosaic", json!({"center_jitter": 0.2}), 0.1),
            spec("random_erase", json!({"min_area": 0.02, "max_area": 0.06, "fill": "black"}), 0.2),
            spec("randaugment", json!({"n": 1, "m": 5}), 0.2),
        ],
    };
    cfg.training = TrainConfig {
        epochs: 30,
        learning_rate: 0.005,
        batch_size: 4,
        input_resolution: 32,
        deterministic: true,
        seed,
        ..TrainConfig::default()
    };
    let config = write_config(root, &cfg)?;
    Ok(FixturePaths {
        root: root.to_path_buf(),
        all_image_root: Some(all_image),
        all_idb1_root: Some(all_idb1),
        config,
    })
}

/// Eight uniform-color images, four per class, with distinct colors.
pub fn overfit_images(size: u32) -> Vec<(ClassLabel, RgbImage)> {
    const NORMAL: [[u8; 3]; 4] = [[230, 40, 40], [240, 140, 30], [200, 200, 40], [250, 90, 120]];
    const CANCER: [[u8; 3]; 4] = [[30, 60, 220], [40, 170, 200], [110, 40, 190], [20, 120, 90]];
    NORMAL
        .iter()
        .map(|c| (ClassLabel::Normal, *c))
        .chain(CANCER.iter().map(|c| (ClassLabel::Cancer, *c)))
        .map(|(label, c)| (label, RgbImage::from_pixel(size, size, Rgb(c))))
        .collect()
}

/// The overfit set as an ALL-IDB1 style tree, configured to train and
/// evaluate on the same eight images.
pub fn write_overfit_fixture(root: &Path, seed: u64) -> Result<FixturePaths> {
    let all_idb1 = root.join("ALL_IDB1");
    for (i, (label, img)) in overfit_images(16).iter().enumerate() {
        write_png(img, &all_idb1.join(label.name()).join(format!("color_{i}.png")))?;
    }
    let mut cfg = PipelineConfig::default();
    cfg.apply_seed(seed);
    cfg.dataset.all_idb1_root = Some(PathBuf::from("ALL_IDB1"));
    cfg.dataset.ratios = SplitRatios::new(0.98, 0.01, 0.01)?;
    cfg.dataset.expected_counts = Some(
        [(SourceDataset::AllIdb1, counts(&[(ClassLabel::Normal, 4), (ClassLabel::Cancer, 4)]))]
            .into_iter()
            .collect(),
    );
    cfg.evaluation.split = crate::dataset::Split::Train;
    cfg.evaluation.validation_split = crate::dataset::Split::Train;
    cfg.training = TrainConfig {
        epochs: 200,
        learning_rate: 0.01,
        batch_size: 8,
        input_resolution: 16,
        deterministic: true,
        seed,
        ..TrainConfig::default()
    };
    let config = write_config(root, &cfg)?;
    Ok(FixturePaths {
        root: root.to_path_buf(),
        all_image_root: None,
        all_idb1_root: Some(all_idb1),
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{segment_sample, SegmentationConfig};

    #[test]
    fn cancer_nuclei_are_larger_after_segmentation() {
        let mut rng = derived_rng(1, &[b"t"]);
        let cfg = SegmentationConfig::default();
        for _ in 0..5 {
            let n = segment_sample(&smear_image(ClassLabel::Normal, 48, &mut rng), &cfg).unwrap();
            let c = segment_sample(&smear_image(ClassLabel::Cancer, 48, &mut rng), &cfg).unwrap();
            assert!(!n.fallback_used && !c.fallback_used);
            assert!(c.foreground_fraction > 2.0 * n.foreground_fraction);
        }
    }

    #[test]
    fn fixtures_write_loadable_configs() {
        let dir = tempfile::tempdir().unwrap();
        let toy = write_toy_fixture(&dir.path().join("toy"), 4).unwrap();
        let cfg = PipelineConfig::load(&toy.config).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.training.epochs, 30);
        let over = write_overfit_fixture(&dir.path().join("over"), 4).unwrap();
        PipelineConfig::load(&over.config).unwrap().validate().unwrap();
    }
}
