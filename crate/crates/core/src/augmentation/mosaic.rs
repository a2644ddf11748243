use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::Rng;

use super::geometric::uniform;
use crate::dataset::ClassLabel;
use crate::{Error, Result};

/// Four-image mosaic around a jittered center point.
///
/// Each input is resized to `target` and placed with one corner on the
/// center: the top-left quadrant shows the bottom-right of image 0, the
/// top-right the bottom-left of image 1, then image 2 bottom-left and image 3
/// bottom-right. All four labels must agree; the shared label is returned.
pub fn mosaic<R: Rng + ?Sized>(
    images: [&RgbImage; 4],
    labels: [ClassLabel; 4],
    target: (u32, u32),
    center_jitter: f64,
    rng: &mut R,
) -> Result<(RgbImage, ClassLabel)> {
    if labels.iter().any(|l| *l != labels[0]) {
        return Err(Error::MixedMosaicLabels(labels.iter().map(|l| l.to_string()).collect()));
    }
    let (tw, th) = target;
    if tw < 2 || th < 2 {
        return Err(Error::InvalidArgument(format!("mosaic target {tw}x{th} is too small")));
    }
    if images.iter().any(|i| i.width() == 0 || i.height() == 0) {
        return Err(Error::InvalidArgument("mosaic input image is empty".into()));
    }
    if !(0.0..0.5).contains(&center_jitter) {
        return Err(Error::InvalidArgument("center_jitter must lie in [0, 0.5)".into()));
    }

    let jx = uniform(rng, -center_jitter, center_jitter);
    let jy = uniform(rng, -center_jitter, center_jitter);
    let cx = ((f64::from(tw / 2) + jx * f64::from(tw)).round() as u32).clamp(1, tw - 1);
    let cy = ((f64::from(th / 2) + jy * f64::from(th)).round() as u32).clamp(1, th - 1);

    let fitted: Vec<RgbImage> = images
        .iter()
        .map(|img| {
            if img.dimensions() == target {
                (*img).clone()
            } else {
                imageops::resize(*img, tw, th, FilterType::Triangle)
            }
        })
        .collect();

    let mut out = RgbImage::new(tw, th);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let (q, sx, sy) = match (x < cx, y < cy) {
            (true, true) => (0, x + tw - cx, y + th - cy),
            (false, true) => (1, x - cx, y + th - cy),
            (true, false) => (2, x + tw - cx, y - cy),
            (false, false) => (3, x - cx, y - cy),
        };
        *px = *fitted[q].get_pixel(sx, sy);
    }
    Ok((out, labels[0]))
}
