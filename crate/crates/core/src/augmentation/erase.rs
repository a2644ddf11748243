use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometric::uniform;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EraseFill {
    /// Independent uniform byte per channel.
    #[default]
    Noise,
    Black,
    /// Mean color of the whole image.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EraseParams {
    pub min_area: f64,
    pub max_area: f64,
    /// Width / height ratio bounds, sampled log-uniformly.
    pub min_aspect: f64,
    pub max_aspect: f64,
    pub fill: EraseFill,
}

impl Default for EraseParams {
    fn default() -> Self {
        EraseParams {
            min_area: 0.02,
            max_area: 0.2,
            min_aspect: 0.3,
            max_aspect: 3.3,
            fill: EraseFill::Noise,
        }
    }
}

impl EraseParams {
    pub fn fixed_area(area: f64) -> Self {
        EraseParams {
            min_area: area,
            max_area: area,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.min_area)
            && (0.0..1.0).contains(&self.max_area)
            && self.min_area <= self.max_area
            && self.min_aspect > 0.0
            && self.min_aspect <= self.max_aspect
            && self.max_aspect.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid random_erase parameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EraseRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl EraseRect {
    pub fn area(&self) -> u32 {
        self.width * self.height
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// Draws the rectangle to erase; `None` when the drawn area rounds to nothing.
pub fn sample_erase_rect<R: Rng + ?Sized>(
    width: u32,
    height: u32,
    params: &EraseParams,
    rng: &mut R,
) -> Option<EraseRect> {
    let area = uniform(rng, params.min_area, params.max_area) * f64::from(width) * f64::from(height);
    let log_aspect = uniform(rng, params.min_aspect.ln(), params.max_aspect.ln());
    if area <= 0.0 {
        return None;
    }
    let aspect = log_aspect.exp();
    let w = ((area * aspect).sqrt().round() as u32).clamp(1, width);
    let h = ((area / aspect).sqrt().round() as u32).clamp(1, height);
    let x = rng.random_range(0..=width - w);
    let y = rng.random_range(0..=height - h);
    Some(EraseRect { x, y, width: w, height: h })
}

pub fn random_erase_with_rect<R: Rng + ?Sized>(
    image: &RgbImage,
    params: &EraseParams,
    rng: &mut R,
) -> (RgbImage, Option<EraseRect>) {
    let (w, h) = image.dimensions();
    let Some(rect) = sample_erase_rect(w, h, params, rng) else {
        return (image.clone(), None);
    };
    let mean = if params.fill == EraseFill::Mean {
        let n = u64::from(w) * u64::from(h);
        let mut sum = [0u64; 3];
        for p in image.pixels() {
            for c in 0..3 {
                sum[c] += u64::from(p[c]);
            }
        }
        Rgb(sum.map(|s| ((s + n / 2) / n) as u8))
    } else {
        Rgb([0, 0, 0])
    };
    let mut out = image.clone();
    for y in rect.y..rect.y + rect.height {
        for x in rect.x..rect.x + rect.width {
            let px = match params.fill {
                EraseFill::Noise => Rgb([rng.random(), rng.random(), rng.random()]),
                EraseFill::Black | EraseFill::Mean => mean,
            };
            out.put_pixel(x, y, px);
        }
    }
    (out, Some(rect))
}

/// Replaces one random axis-aligned rectangle of the image.
pub fn random_erase<R: Rng + ?Sized>(image: &RgbImage, params: &EraseParams, rng: &mut R) -> RgbImage {
    random_erase_with_rect(image, params, rng).0
}
