use std::io::BufWriter;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::hsv::{rgb_to_hsv, HsvRange};
use crate::{Error, Result};

/// Row-major per-pixel foreground flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryMask { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits[i] = value;
    }

    pub fn foreground_area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.foreground_area() as f64 / self.bits.len() as f64
        }
    }

    pub fn complement(&self) -> Self {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Writes a 1-bit grayscale PNG, foreground white.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::One);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::format("mask png", e))?;
        let stride = (self.width as usize).div_ceil(8);
        let mut data = vec![0u8; stride * self.height as usize];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    data[y as usize * stride + x as usize / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        writer
            .write_image_data(&data)
            .map_err(|e| Error::format("mask png", e))
    }
}

/// Marks every pixel whose HSV triple falls inside `range`.
pub fn build_mask(image: &RgbImage, range: &HsvRange) -> BinaryMask {
    let bits = image
        .pixels()
        .map(|Rgb([r, g, b])| range.contains(rgb_to_hsv(*r, *g, *b)))
        .collect();
    BinaryMask {
        width: image.width(),
        height: image.height(),
        bits,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundPolicy {
    #[default]
    Black,
    White,
    /// Mean color of the background pixels being replaced.
    MeanColor,
}

pub fn apply_mask(image: &RgbImage, mask: &BinaryMask, policy: BackgroundPolicy) -> Result<RgbImage> {
    if image.dimensions() != mask.dimensions() {
        return Err(Error::DimensionMismatch {
            image: image.dimensions(),
            mask: mask.dimensions(),
        });
    }
    let fill = match policy {
        BackgroundPolicy::Black => Rgb([0, 0, 0]),
        BackgroundPolicy::White => Rgb([255, 255, 255]),
        BackgroundPolicy::MeanColor => {
            let mut sum = [0u64; 3];
            let mut n = 0u64;
            for (p, keep) in image.pixels().zip(mask.bits()) {
                if !keep {
                    for c in 0..3 {
                        sum[c] += u64::from(p[c]);
                    }
                    n += 1;
                }
            }
            if n == 0 {
                Rgb([0, 0, 0])
            } else {
                Rgb(sum.map(|s| ((s + n / 2) / n) as u8))
            }
        }
    };
    let mut out = image.clone();
    for (p, keep) in out.pixels_mut().zip(mask.bits()) {
        if !keep {
            *p = fill;
        }
    }
    Ok(out)
}
