//! Inverse-mapped affine warps with bilinear sampling and a black border.

use image::{Rgb, RgbImage};

/// Maps an output coordinate to a source coordinate:
/// `src = (a*x + b*y + c, d*x + e*y + f)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct InverseAffine {
    m: [f64; 6],
}

impl InverseAffine {
    fn about_center(w: u32, h: u32, lin: [f64; 4], shift: (f64, f64)) -> Self {
        let cx = (f64::from(w) - 1.0) / 2.0;
        let cy = (f64::from(h) - 1.0) / 2.0;
        let [a, b, d, e] = lin;
        // src = L (dst - c - shift) + c
        let (ox, oy) = (cx + shift.0, cy + shift.1);
        InverseAffine {
            m: [a, b, cx - a * ox - b * oy, d, e, cy - d * ox - e * oy],
        }
    }

    /// Counter-clockwise (as displayed) rotation about the image center.
    pub fn rotation(w: u32, h: u32, degrees: f64) -> Self {
        let t = degrees.to_radians();
        let (s, c) = t.sin_cos();
        Self::about_center(w, h, [c, -s, s, c], (0.0, 0.0))
    }

    /// Content moves by `(dx, dy)` pixels.
    pub fn translation(w: u32, h: u32, dx: f64, dy: f64) -> Self {
        Self::about_center(w, h, [1.0, 0.0, 0.0, 1.0], (dx, dy))
    }

    /// Zoom about the center; `factor > 1` enlarges content.
    pub fn scale(w: u32, h: u32, factor: f64) -> Self {
        Self::about_center(w, h, [1.0 / factor, 0.0, 0.0, 1.0 / factor], (0.0, 0.0))
    }

    pub fn shear_x(w: u32, h: u32, k: f64) -> Self {
        Self::about_center(w, h, [1.0, k, 0.0, 1.0], (0.0, 0.0))
    }

    pub fn shear_y(w: u32, h: u32, k: f64) -> Self {
        Self::about_center(w, h, [1.0, 0.0, k, 1.0], (0.0, 0.0))
    }

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.m;
        (snap(a * x + b * y + c), snap(d * x + e * y + f))
    }
}

// Keeps exact-permutation warps (e.g. 90 degree turns) free of 1e-16 drift.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

pub(crate) fn warp(image: &RgbImage, inv: &InverseAffine) -> RgbImage {
    let (w, h) = image.dimensions();
    RgbImage::from_fn(w, h, |x, y| {
        let (sx, sy) = inv.apply(f64::from(x), f64::from(y));
        sample_bilinear(image, sx, sy)
    })
}

fn sample_bilinear(image: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = (i64::from(image.width()), i64::from(image.height()));
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut acc = [0.0f64; 3];
    for (dx, dy, wt) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        if wt == 0.0 {
            continue;
        }
        let (px, py) = (x0 + dx, y0 + dy);
        if px >= 0 && py >= 0 && px < w && py < h {
            let p = image.get_pixel(px as u32, py as u32);
            for c in 0..3 {
                acc[c] += wt * f64::from(p[c]);
            }
        }
    }
    Rgb(acc.map(|v| v.round().clamp(0.0, 255.0) as u8))
}
