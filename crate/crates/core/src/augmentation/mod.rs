//! Seeded, label-preserving training augmentations.
//!
//! Every transform keeps the input resolution. Randomness comes from a
//! caller-supplied RNG; [`AugmentationPipeline`] derives one stream per
//! `(seed, sample_id, epoch)` so results do not depend on loader order.

mod erase;
mod geometric;
mod mosaic;
mod pipeline;
mod randaugment;
mod warp;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use erase::{random_erase, random_erase_with_rect, sample_erase_rect, EraseFill, EraseParams, EraseRect};
pub use geometric::geometric_transform;
pub use mosaic::mosaic;
pub use pipeline::{build_pipeline, AugmentationConfig, AugmentationPipeline, RawSpec};
pub use randaugment::{rand_augment, RandOp, MAX_MAGNITUDE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum AugmentOp {
    Hflip,
    Vflip,
    /// Angle drawn uniformly from `[min_degrees, max_degrees]`.
    Rotate { min_degrees: f64, max_degrees: f64 },
    /// Shift drawn uniformly from `±max_x * width` and `±max_y * height`.
    Translate { max_x: f64, max_y: f64 },
    /// Zoom factor drawn uniformly from `[min_factor, max_factor]`.
    Scale { min_factor: f64, max_factor: f64 },
    /// Center point jitter as a fraction of the image size.
    Mosaic { center_jitter: f64 },
    RandomErase(EraseParams),
    #[serde(rename = "randaugment")]
    RandAugment { n: u32, m: u32 },
}

impl AugmentOp {
    pub fn kind(&self) -> &'static str {
        match self {
            AugmentOp::Hflip => "hflip",
            AugmentOp::Vflip => "vflip",
            AugmentOp::Rotate { .. } => "rotate",
            AugmentOp::Translate { .. } => "translate",
            AugmentOp::Scale { .. } => "scale",
            AugmentOp::Mosaic { .. } => "mosaic",
            AugmentOp::RandomErase(_) => "random_erase",
            AugmentOp::RandAugment { .. } => "randaugment",
        }
    }

    pub fn is_geometric(&self) -> bool {
        matches!(
            self,
            AugmentOp::Hflip
                | AugmentOp::Vflip
                | AugmentOp::Rotate { .. }
                | AugmentOp::Translate { .. }
                | AugmentOp::Scale { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let range = |what: &str, lo: f64, hi: f64| -> Result<()> {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidArgument(format!("{what} range [{lo}, {hi}] is empty or not finite")));
            }
            Ok(())
        };
        match self {
            AugmentOp::Hflip | AugmentOp::Vflip => Ok(()),
            AugmentOp::Rotate { min_degrees, max_degrees } => range("degrees", *min_degrees, *max_degrees),
            AugmentOp::Translate { max_x, max_y } => {
                range("max_x", 0.0, *max_x)?;
                range("max_y", 0.0, *max_y)?;
                if *max_x > 1.0 || *max_y > 1.0 {
                    return Err(Error::InvalidArgument("translate fractions must be <= 1".into()));
                }
                Ok(())
            }
            AugmentOp::Scale { min_factor, max_factor } => {
                range("factor", *min_factor, *max_factor)?;
                if *min_factor <= 0.0 {
                    return Err(Error::InvalidArgument("scale factor must be positive".into()));
                }
                Ok(())
            }
            AugmentOp::Mosaic { center_jitter } => {
                if !(0.0..0.5).contains(center_jitter) {
                    return Err(Error::InvalidArgument("center_jitter must lie in [0, 0.5)".into()));
                }
                Ok(())
            }
            AugmentOp::RandomErase(p) => p.validate(),
            AugmentOp::RandAugment { m, .. } => {
                if *m > MAX_MAGNITUDE {
                    return Err(Error::InvalidArgument(format!("magnitude {m} exceeds {MAX_MAGNITUDE}")));
                }
                Ok(())
            }
        }
    }
}

/// One pipeline entry: a transform applied with the given probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    #[serde(flatten)]
    pub op: AugmentOp,
    pub probability: f64,
}

impl AugmentationSpec {
    pub fn new(op: AugmentOp, probability: f64) -> Self {
        AugmentationSpec { op, probability }
    }

    pub fn always(op: AugmentOp) -> Self {
        Self::new(op, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidArgument(format!(
                "probability {} outside [0, 1]",
                self.probability
            )));
        }
        self.op.validate()
    }
}
