use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Hexcone RGB to HSV. Achromatic pixels get hue 0.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> Hsv {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let v = f64::from(max) / 255.0;
    if max == 0 {
        return Hsv { h: 0.0, s: 0.0, v };
    }
    let delta = f64::from(max - min);
    let s = delta / f64::from(max);
    if max == min {
        return Hsv { h: 0.0, s, v };
    }
    let (rf, gf, bf) = (f64::from(r), f64::from(g), f64::from(b));
    let sector = if max == r {
        (gf - bf) / delta
    } else if max == g {
        (bf - rf) / delta + 2.0
    } else {
        (rf - gf) / delta + 4.0
    };
    let mut h = 60.0 * sector;
    if h < 0.0 {
        h += 360.0;
    }
    Hsv { h, s, v }
}

/// Inclusive HSV box. `hue_min > hue_max` denotes an interval wrapping through 0°.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsvRange {
    pub hue_min: f64,
    pub hue_max: f64,
    pub sat_min: f64,
    pub sat_max: f64,
    pub val_min: f64,
    pub val_max: f64,
}

impl Default for HsvRange {
    /// Purple, stained nuclei.
    fn default() -> Self {
        HsvRange {
            hue_min: 220.0,
            hue_max: 340.0,
            sat_min: 0.25,
            sat_max: 1.0,
            val_min: 0.20,
            val_max: 1.0,
        }
    }
}

impl HsvRange {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(0.0..360.0).contains(&self.hue_min) || !(0.0..=360.0).contains(&self.hue_max) {
            return Err(Error::Config(format!(
                "hue bounds must lie in [0, 360), got {}..{}",
                self.hue_min, self.hue_max
            )));
        }
        if ![self.sat_min, self.sat_max, self.val_min, self.val_max]
            .into_iter()
            .all(in_unit)
        {
            return Err(Error::Config("saturation and value bounds must lie in [0, 1]".into()));
        }
        if self.sat_min > self.sat_max || self.val_min > self.val_max {
            return Err(Error::Config("min bound exceeds max bound".into()));
        }
        Ok(())
    }

    pub fn contains_hue(&self, h: f64) -> bool {
        if self.hue_min <= self.hue_max {
            h >= self.hue_min && h <= self.hue_max
        } else {
            h >= self.hue_min || h <= self.hue_max
        }
    }

    pub fn contains(&self, hsv: Hsv) -> bool {
        self.contains_hue(hsv.h)
            && hsv.s >= self.sat_min
            && hsv.s <= self.sat_max
            && hsv.v >= self.val_min
            && hsv.v <= self.val_max
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    /// Reference conversion written independently: channel-distance form.
    fn reference_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
        let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
        let maxc = r.max(g).max(b);
        let minc = r.min(g).min(b);
        let v = maxc;
        if minc == maxc {
            return (0.0, 0.0, v);
        }
        let s = (maxc - minc) / maxc;
        let rc = (maxc - r) / (maxc - minc);
        let gc = (maxc - g) / (maxc - minc);
        let bc = (maxc - b) / (maxc - minc);
        let h = if r == maxc {
            bc - gc
        } else if g == maxc {
            2.0 + rc - bc
        } else {
            4.0 + gc - rc
        };
        ((h / 6.0).rem_euclid(1.0) * 360.0, s, v)
    }

    fn close(a: Hsv, b: (f64, f64, f64)) -> bool {
        let dh = (a.h - b.0).abs();
        let dh = dh.min(360.0 - dh);
        dh < 1e-9 && (a.s - b.1).abs() < 1e-9 && (a.v - b.2).abs() < 1e-9
    }

    #[test]
    fn pure_red_and_gray() {
        assert_eq!(rgb_to_hsv(255, 0, 0), Hsv { h: 0.0, s: 1.0, v: 1.0 });
        let g = rgb_to_hsv(128, 128, 128);
        assert_eq!((g.h, g.s), (0.0, 0.0));
        assert!((g.v - 128.0 / 255.0).abs() < 1e-12);
        assert_eq!(rgb_to_hsv(0, 0, 0), Hsv { h: 0.0, s: 0.0, v: 0.0 });
    }

    #[test]
    fn violet_sample_matches_reference() {
        let got = rgb_to_hsv(100, 50, 200);
        // 60 * ((100 - 50) / 150 + 4) = 260 degrees
        assert!((got.h - 260.0).abs() < 1e-9);
        assert!((got.s - 0.75).abs() < 1e-12);
        assert!(close(got, reference_hsv(100, 50, 200)));
    }

    #[test]
    fn wrapping_hue_interval() {
        let r = HsvRange { hue_min: 350.0, hue_max: 20.0, sat_min: 0.0, sat_max: 1.0, val_min: 0.0, val_max: 1.0 };
        assert!(r.contains_hue(355.0) && r.contains_hue(0.0) && r.contains_hue(20.0));
        assert!(!r.contains_hue(180.0));
        r.validate().unwrap();
    }

    #[test]
    fn invalid_ranges() {
        let r = HsvRange {
            sat_min: 0.9,
            sat_max: 0.1,
            ..HsvRange::default()
        };
        assert!(r.validate().is_err());
        let r = HsvRange {
            hue_min: 400.0,
            ..HsvRange::default()
        };
        assert!(r.validate().is_err());
    }

    proptest! {
        #[test]
        fn matches_reference_everywhere(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
            let got = rgb_to_hsv(r, g, b);
            prop_assert!(close(got, reference_hsv(r, g, b)), "{:?} vs {:?}", got, reference_hsv(r, g, b));
            prop_assert!(got.h >= 0.0 && got.h < 360.0);
        }
    }
}
