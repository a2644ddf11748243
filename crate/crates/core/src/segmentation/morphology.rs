use serde::{Deserialize, Serialize};

use super::mask::BinaryMask;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
    Close,
}

/// One morphology operation with a `(2r+1)`-square structuring element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphStep {
    pub op: MorphOp,
    pub radius: u32,
}

impl MorphStep {
    pub fn new(op: MorphOp, radius: u32) -> Self {
        MorphStep { op, radius }
    }
}

pub fn refine_mask(mask: &BinaryMask, steps: &[MorphStep]) -> Result<BinaryMask> {
    if let Some(bad) = steps.iter().find(|s| s.radius == 0) {
        return Err(Error::Config(format!("{:?} kernel radius must be >= 1", bad.op)));
    }
    let mut out = mask.clone();
    for step in steps {
        let r = step.radius;
        out = match step.op {
            MorphOp::Erode => erode(&out, r),
            MorphOp::Dilate => dilate(&out, r),
            MorphOp::Open => dilate(&erode(&out, r), r),
            MorphOp::Close => erode(&dilate(&out, r), r),
        };
    }
    Ok(out)
}

/// A pixel survives iff every in-bounds pixel of its window is set.
pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    window_filter(mask, radius, |count, len| count == len)
}

/// A pixel is set iff any in-bounds pixel of its window is set.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    window_filter(mask, radius, |count, _| count > 0)
}

// The square window is separable: filter rows, then columns, using prefix counts.
fn window_filter(mask: &BinaryMask, radius: u32, keep: impl Fn(usize, usize) -> bool) -> BinaryMask {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius as usize;
    let run = |line: &[bool], out: &mut Vec<bool>| {
        let mut prefix = Vec::with_capacity(line.len() + 1);
        prefix.push(0usize);
        for &b in line {
            prefix.push(prefix.last().unwrap() + usize::from(b));
        }
        out.clear();
        for i in 0..line.len() {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(line.len());
            out.push(keep(prefix[hi] - prefix[lo], hi - lo));
        }
    };

    let mut rows = vec![false; w * h];
    let mut buf = Vec::new();
    for y in 0..h {
        run(&mask.bits()[y * w..(y + 1) * w], &mut buf);
        rows[y * w..(y + 1) * w].copy_from_slice(&buf);
    }
    let mut out = BinaryMask::new(w as u32, h as u32);
    let mut col = vec![false; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        run(&col, &mut buf);
        for (y, v) in buf.iter().enumerate() {
            out.set(x as u32, y as u32, *v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn brute(mask: &BinaryMask, r: u32, all: bool) -> BinaryMask {
        let (w, h) = mask.dimensions();
        BinaryMask::from_fn(w, h, |x, y| {
            let mut vals = Vec::new();
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    vals.push(mask.get(xx, yy));
                }
            }
            if all {
                vals.iter().all(|v| *v)
            } else {
                vals.iter().any(|v| *v)
            }
        })
    }

    #[test]
    fn empty_list_is_identity() {
        let m = BinaryMask::from_fn(7, 5, |x, y| (x * y) % 3 == 1);
        assert_eq!(refine_mask(&m, &[]).unwrap(), m);
    }

    #[test]
    fn isolated_pixel_removed_by_open_close() {
        let mut m = BinaryMask::new(9, 9);
        m.set(4, 4, true);
        let steps = [MorphStep::new(MorphOp::Open, 1), MorphStep::new(MorphOp::Close, 1)];
        assert_eq!(refine_mask(&m, &steps).unwrap().foreground_area(), 0);
    }

    #[test]
    fn full_mask_absorbs_dilation_and_erosion() {
        let full = BinaryMask::filled(6, 4, true);
        assert_eq!(dilate(&full, 2), full);
        assert_eq!(erode(&full, 2), full);
    }

    #[test]
    fn zero_radius_rejected() {
        let m = BinaryMask::new(3, 3);
        assert!(refine_mask(&m, &[MorphStep::new(MorphOp::Dilate, 0)]).is_err());
    }

    #[test]
    fn closing_fills_small_hole() {
        let mut m = BinaryMask::filled(9, 9, true);
        m.set(4, 4, false);
        let closed = refine_mask(&m, &[MorphStep::new(MorphOp::Close, 1)]).unwrap();
        assert!(closed.get(4, 4));
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1u32..=16, 1u32..=16).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), (w * h) as usize)
                .prop_map(move |bits| BinaryMask::from_fn(w, h, |x, y| bits[(y * w + x) as usize]))
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(m in arb_mask(), r in 1u32..4) {
            prop_assert_eq!(erode(&m, r), brute(&m, r, true));
            prop_assert_eq!(dilate(&m, r), brute(&m, r, false));
        }

        #[test]
        fn duality(m in arb_mask(), r in 1u32..4) {
            prop_assert_eq!(dilate(&m.complement(), r), erode(&m, r).complement());
        }
    }
}
