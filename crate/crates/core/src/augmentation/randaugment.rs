use image::{Rgb, RgbImage};
use rand::Rng;

use super::warp::{warp, InverseAffine};

/// Top of the magnitude scale.
pub const MAX_MAGNITUDE: u32 = 30;

const MAX_ROTATE_DEGREES: f64 = 30.0;
const MAX_TRANSLATE_FRACTION: f64 = 0.45;
const MAX_SHEAR: f64 = 0.3;
const MAX_ENHANCE_DELTA: f64 = 0.9;
const MAX_POSTERIZE_DROP: f64 = 4.0;

/// The fixed RandAugment policy. Each op is the identity at magnitude 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandOp {
    Rotate,
    TranslateX,
    TranslateY,
    ShearX,
    ShearY,
    Contrast,
    Brightness,
    Sharpness,
    Posterize,
    Solarize,
}

impl RandOp {
    pub const POLICY: [RandOp; 10] = [
        RandOp::Rotate,
        RandOp::TranslateX,
        RandOp::TranslateY,
        RandOp::ShearX,
        RandOp::ShearY,
        RandOp::Contrast,
        RandOp::Brightness,
        RandOp::Sharpness,
        RandOp::Posterize,
        RandOp::Solarize,
    ];

    /// Applies the op at `level` in `[0, 1]`; `negate` flips signed ops.
    pub fn apply(self, image: &RgbImage, level: f64, negate: bool) -> RgbImage {
        let sign = if negate { -1.0 } else { 1.0 };
        let (w, h) = image.dimensions();
        if level == 0.0 {
            return image.clone();
        }
        match self {
            RandOp::Rotate => warp(image, &InverseAffine::rotation(w, h, sign * level * MAX_ROTATE_DEGREES)),
            RandOp::TranslateX => {
                let dx = (sign * level * MAX_TRANSLATE_FRACTION * f64::from(w)).round();
                warp(image, &InverseAffine::translation(w, h, dx, 0.0))
            }
            RandOp::TranslateY => {
                let dy = (sign * level * MAX_TRANSLATE_FRACTION * f64::from(h)).round();
                warp(image, &InverseAffine::translation(w, h, 0.0, dy))
            }
            RandOp::ShearX => warp(image, &InverseAffine::shear_x(w, h, sign * level * MAX_SHEAR)),
            RandOp::ShearY => warp(image, &InverseAffine::shear_y(w, h, sign * level * MAX_SHEAR)),
            RandOp::Contrast => {
                let mean = gray_mean(image);
                blend(image, |_, _| [mean; 3], 1.0 + sign * level * MAX_ENHANCE_DELTA)
            }
            RandOp::Brightness => blend(image, |_, _| [0.0; 3], 1.0 + sign * level * MAX_ENHANCE_DELTA),
            RandOp::Sharpness => {
                let smooth = smoothed(image);
                blend(
                    image,
                    |x, y| smooth.get_pixel(x, y).0.map(f64::from),
                    1.0 + sign * level * MAX_ENHANCE_DELTA,
                )
            }
            RandOp::Posterize => {
                let bits = 8 - (level * MAX_POSTERIZE_DROP).round() as u32;
                let keep = (0xffu32 << (8 - bits)) as u8;
                map_channels(image, |v| v & keep)
            }
            RandOp::Solarize => {
                let threshold = 256.0 - level * 256.0;
                map_channels(image, |v| if f64::from(v) >= threshold { 255 - v } else { v })
            }
        }
    }
}

fn map_channels(image: &RgbImage, f: impl Fn(u8) -> u8) -> RgbImage {
    let mut out = image.clone();
    for p in out.pixels_mut() {
        *p = Rgb(p.0.map(&f));
    }
    out
}

/// `degenerate + factor * (image - degenerate)`, rounded and clamped.
fn blend(image: &RgbImage, degenerate: impl Fn(u32, u32) -> [f64; 3], factor: f64) -> RgbImage {
    RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let p = image.get_pixel(x, y);
        let d = degenerate(x, y);
        Rgb(std::array::from_fn(|c| {
            let v = d[c] + factor * (f64::from(p[c]) - d[c]);
            v.round().clamp(0.0, 255.0) as u8
        }))
    })
}

fn gray_mean(image: &RgbImage) -> f64 {
    let n = image.pixels().len().max(1) as f64;
    let sum: f64 = image
        .pixels()
        .map(|p| (299.0 * f64::from(p[0]) + 587.0 * f64::from(p[1]) + 114.0 * f64::from(p[2])) / 1000.0)
        .sum();
    (sum / n).round()
}

/// 3x3 smoothing kernel (center weight 5, total 13); border pixels unchanged.
fn smoothed(image: &RgbImage) -> RgbImage {
    let (w, h) = image.dimensions();
    let mut out = image.clone();
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut acc = [0u32; 3];
            for dy in 0..3 {
                for dx in 0..3 {
                    let weight = if dx == 1 && dy == 1 { 5 } else { 1 };
                    let p = image.get_pixel(x + dx - 1, y + dy - 1);
                    for c in 0..3 {
                        acc[c] += weight * u32::from(p[c]);
                    }
                }
            }
            out.put_pixel(x, y, Rgb(acc.map(|a| ((a + 6) / 13) as u8)));
        }
    }
    out
}

/// Applies `n` ops drawn uniformly (with replacement) from [`RandOp::POLICY`],
/// all at magnitude `m` on a `0..=30` scale.
pub fn rand_augment<R: Rng + ?Sized>(image: &RgbImage, n: u32, m: u32, rng: &mut R) -> RgbImage {
    let level = f64::from(m.min(MAX_MAGNITUDE)) / f64::from(MAX_MAGNITUDE);
    let mut out = image.clone();
    for _ in 0..n {
        let op = RandOp::POLICY[rng.random_range(0..RandOp::POLICY.len())];
        let negate = rng.random_bool(0.5);
        out = op.apply(&out, level, negate);
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn textured() -> RgbImage {
        RgbImage::from_fn(24, 16, |x, y| Rgb([(x * 10) as u8, (y * 15) as u8, ((x * y) % 256) as u8]))
    }

    #[test]
    fn n_zero_is_identity() {
        let img = textured();
        assert_eq!(rand_augment(&img, 0, 20, &mut ChaCha8Rng::seed_from_u64(1)), img);
    }

    #[test]
    fn magnitude_zero_is_identity_for_every_op() {
        let img = textured();
        for op in RandOp::POLICY {
            assert_eq!(op.apply(&img, 0.0, false), img, "{op:?}");
            assert_eq!(op.apply(&img, 0.0, true), img, "{op:?}");
        }
        for seed in 0..5 {
            assert_eq!(rand_augment(&img, 3, 0, &mut ChaCha8Rng::seed_from_u64(seed)), img);
        }
    }

    #[test]
    fn every_op_changes_the_image_at_full_magnitude() {
        let img = textured();
        for op in RandOp::POLICY {
            assert_ne!(op.apply(&img, 1.0, false), img, "{op:?}");
        }
    }

    #[test]
    fn posterize_and_solarize_by_hand() {
        let img = RgbImage::from_pixel(1, 1, Rgb([0b1011_0111, 200, 10]));
        // level 1: drop 4 bits
        assert_eq!(RandOp::Posterize.apply(&img, 1.0, false).get_pixel(0, 0), &Rgb([0b1011_0000, 192, 0]));
        // level 0.5: threshold 128, so 183 and 200 invert
        assert_eq!(RandOp::Solarize.apply(&img, 0.5, false).get_pixel(0, 0), &Rgb([72, 55, 10]));
    }

    #[test]
    fn seeded_determinism() {
        let img = textured();
        let a = rand_augment(&img, 2, 9, &mut ChaCha8Rng::seed_from_u64(77));
        let b = rand_augment(&img, 2, 9, &mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(a, b);
        assert_eq!(a.dimensions(), img.dimensions());
    }
}
