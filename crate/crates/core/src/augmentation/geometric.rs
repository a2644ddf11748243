use image::imageops;
use image::RgbImage;
use rand::Rng;

use super::warp::{warp, InverseAffine};
use super::{AugmentOp, AugmentationSpec};
use crate::{Error, Result};

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Flip, rotate, translate or scale; output size equals input size, exposed
/// borders are black.
pub fn geometric_transform<R: Rng + ?Sized>(
    image: &RgbImage,
    spec: &AugmentationSpec,
    rng: &mut R,
) -> Result<RgbImage> {
    let (w, h) = image.dimensions();
    let out = match &spec.op {
        AugmentOp::Hflip => imageops::flip_horizontal(image),
        AugmentOp::Vflip => imageops::flip_vertical(image),
        AugmentOp::Rotate { min_degrees, max_degrees } => {
            let deg = uniform(rng, *min_degrees, *max_degrees);
            if deg == 0.0 {
                image.clone()
            } else {
                warp(image, &InverseAffine::rotation(w, h, deg))
            }
        }
        AugmentOp::Translate { max_x, max_y } => {
            let dx = (uniform(rng, -max_x, *max_x) * f64::from(w)).round();
            let dy = (uniform(rng, -max_y, *max_y) * f64::from(h)).round();
            warp(image, &InverseAffine::translation(w, h, dx, dy))
        }
        AugmentOp::Scale { min_factor, max_factor } => {
            let f = uniform(rng, *min_factor, *max_factor);
            warp(image, &InverseAffine::scale(w, h, f))
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "`{}` is not a geometric transform",
                other.kind()
            )))
        }
    };
    Ok(out)
}
