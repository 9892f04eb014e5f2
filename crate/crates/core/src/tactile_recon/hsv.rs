use serde::{Deserialize, Serialize};

use crate::imaging_io::ImageRGB8;
use crate::membrane_sim::TactileFramePair;

/// Hue windows (degrees) and saturation/value floors that isolate the LED
/// colours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsvFilterSpec {
    pub red_hue: Vec<[f64; 2]>,
    pub blue_hue: Vec<[f64; 2]>,
    pub min_saturation: f64,
    pub min_value: f64,
}

impl Default for HsvFilterSpec {
    fn default() -> Self {
        Self {
            red_hue: vec![[0.0, 20.0], [340.0, 360.0]],
            blue_hue: vec![[200.0, 260.0]],
            min_saturation: 0.35,
            min_value: 0.2,
        }
    }
}

impl HsvFilterSpec {
    pub fn validate(&self) -> Result<(), String> {
        let windows_ok = |w: &[[f64; 2]]| {
            !w.is_empty()
                && w.iter()
                    .all(|[lo, hi]| lo <= hi && *lo >= 0.0 && *hi <= 360.0)
        };
        if !windows_ok(&self.red_hue) || !windows_ok(&self.blue_hue) {
            return Err("hue windows must be non-empty sub-intervals of [0, 360]".into());
        }
        if !(0.0..=1.0).contains(&self.min_saturation) || !(0.0..=1.0).contains(&self.min_value) {
            return Err("saturation and value floors must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn accepts(&self, px: [u8; 3]) -> bool {
        let (h, s, v) = rgb_to_hsv(px);
        if s < self.min_saturation || v < self.min_value {
            return false;
        }
        let inside = |w: &[[f64; 2]]| w.iter().any(|&[lo, hi]| h >= lo && h <= hi);
        inside(&self.red_hue) || inside(&self.blue_hue)
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv(px: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = px.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, max)
}

/// Binary per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

pub fn hsv_mask(frame: &ImageRGB8, spec: &HsvFilterSpec) -> Mask {
    Mask {
        width: frame.width(),
        height: frame.height(),
        bits: frame.pixels().iter().map(|&p| spec.accepts(p)).collect(),
    }
}

/// Removes the static illumination pattern: `frame − reference + mean(reference)`
/// per channel.
pub fn flat_field(frame: &ImageRGB8, reference: &ImageRGB8) -> ImageRGB8 {
    let n = reference.pixels().len() as f64;
    let mut mean = [0.0f64; 3];
    for p in reference.pixels() {
        for c in 0..3 {
            mean[c] += p[c] as f64;
        }
    }
    let mean = mean.map(|m| m / n);
    let pixels = frame
        .pixels()
        .iter()
        .zip(reference.pixels())
        .map(|(p, r)| {
            std::array::from_fn(|c| {
                (p[c] as f64 - r[c] as f64 + mean[c])
                    .round()
                    .clamp(0.0, 255.0) as u8
            })
        })
        .collect();
    ImageRGB8::from_pixels(frame.width(), frame.height(), pixels).expect("same size as frame")
}

/// Contact pixels: LED-coloured in either flat-field corrected step.
pub fn contact_mask(
    pair: &TactileFramePair,
    reference: &TactileFramePair,
    spec: &HsvFilterSpec,
) -> Mask {
    let dx = hsv_mask(&flat_field(&pair.frame_dx, &reference.frame_dx), spec);
    let dy = hsv_mask(&flat_field(&pair.frame_dy, &reference.frame_dy), spec);
    Mask {
        width: dx.width,
        height: dx.height,
        bits: dx
            .bits
            .iter()
            .zip(&dy.bits)
            .map(|(a, b)| *a || *b)
            .collect(),
    }
}
