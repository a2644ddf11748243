//! HSV-threshold segmentation of white blood cells.
//!
//! `segment_sample` runs `build_mask` → `refine_mask` → `apply_mask`, and hands
//! back the untouched input when too little foreground survives.

mod hsv;
mod mask;
mod morphology;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use hsv::{rgb_to_hsv, Hsv, HsvRange};
pub use mask::{apply_mask, build_mask, BackgroundPolicy, BinaryMask};
pub use morphology::{dilate, erode, refine_mask, MorphOp, MorphStep};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "SegmentationSection", into = "SegmentationSection")]
pub struct SegmentationConfig {
    pub range: HsvRange,
    pub morphology: Vec<MorphStep>,
    pub min_foreground_fraction: f64,
    pub background_policy: BackgroundPolicy,
    /// Write each refined mask as a 1-bit PNG next to the segmented image.
    pub debug_masks: bool,
}

/// Flat on-disk form of [`SegmentationConfig`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SegmentationSection {
    hue_min: f64,
    hue_max: f64,
    sat_min: f64,
    sat_max: f64,
    val_min: f64,
    val_max: f64,
    morphology: Vec<MorphStep>,
    min_foreground_fraction: f64,
    background_policy: BackgroundPolicy,
    debug_masks: bool,
}

impl Default for SegmentationSection {
    fn default() -> Self {
        SegmentationConfig::default().into()
    }
}

impl From<SegmentationSection> for SegmentationConfig {
    fn from(s: SegmentationSection) -> Self {
        SegmentationConfig {
            range: HsvRange {
                hue_min: s.hue_min,
                hue_max: s.hue_max,
                sat_min: s.sat_min,
                sat_max: s.sat_max,
                val_min: s.val_min,
                val_max: s.val_max,
            },
            morphology: s.morphology,
            min_foreground_fraction: s.min_foreground_fraction,
            background_policy: s.background_policy,
            debug_masks: s.debug_masks,
        }
    }
}

impl From<SegmentationConfig> for SegmentationSection {
    fn from(c: SegmentationConfig) -> Self {
        SegmentationSection {
            hue_min: c.range.hue_min,
            hue_max: c.range.hue_max,
            sat_min: c.range.sat_min,
            sat_max: c.range.sat_max,
            val_min: c.range.val_min,
            val_max: c.range.val_max,
            morphology: c.morphology,
            min_foreground_fraction: c.min_foreground_fraction,
            background_policy: c.background_policy,
            debug_masks: c.debug_masks,
        }
    }
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            range: HsvRange::default(),
            morphology: vec![MorphStep::new(MorphOp::Open, 1), MorphStep::new(MorphOp::Close, 2)],
            min_foreground_fraction: 0.01,
            background_policy: BackgroundPolicy::Black,
            debug_masks: false,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        if !(0.0..=1.0).contains(&self.min_foreground_fraction) {
            return Err(Error::Config(format!(
                "min_foreground_fraction must lie in [0, 1], got {}",
                self.min_foreground_fraction
            )));
        }
        if self.morphology.iter().any(|s| s.radius < 1) {
            return Err(Error::Config("morphology kernel radius must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentedImage {
    pub image: RgbImage,
    pub mask: BinaryMask,
    pub fallback_used: bool,
    pub foreground_fraction: f64,
}

pub fn segment_sample(image: &RgbImage, config: &SegmentationConfig) -> Result<SegmentedImage> {
    config.validate()?;
    let raw = build_mask(image, &config.range);
    let mask = refine_mask(&raw, &config.morphology)?;
    let foreground_fraction = mask.foreground_fraction();
    if foreground_fraction < config.min_foreground_fraction {
        return Ok(SegmentedImage {
            image: image.clone(),
            mask,
            fallback_used: true,
            foreground_fraction,
        });
    }
    Ok(SegmentedImage {
        image: apply_mask(image, &mask, config.background_policy)?,
        mask,
        fallback_used: false,
        foreground_fraction,
    })
}
