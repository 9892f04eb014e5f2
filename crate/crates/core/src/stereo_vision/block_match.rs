use serde::{Deserialize, Serialize};

use super::{Result, StereoError};
use crate::imaging_io::{FloatMap, ImageRGB8, MapUnit, INVALID_DEPTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherSettings {
    /// Odd side length of the square SAD window.
    pub window: usize,
    pub min_disparity: usize,
    pub max_disparity: usize,
    /// The runner-up cost (outside ±1 of the winner) must exceed
    /// `uniqueness_ratio × best`.
    pub uniqueness_ratio: f64,
    /// Minimum mean absolute horizontal gradient inside the window, in
    /// grey levels (R+G+B).
    pub texture_threshold: f64,
}

impl Default for MatcherSettings {
    fn default() -> Self {
        Self {
            window: 11,
            min_disparity: 0,
            max_disparity: 128,
            uniqueness_ratio: 1.15,
            texture_threshold: 3.0,
        }
    }
}

impl MatcherSettings {
    pub fn validate(&self) -> Result<()> {
        if self.window.is_multiple_of(2) || self.window == 0 {
            return Err(StereoError::InvalidSettings(format!(
                "window {} must be odd",
                self.window
            )));
        }
        if self.max_disparity < self.min_disparity {
            return Err(StereoError::InvalidSettings(
                "max disparity below min disparity".into(),
            ));
        }
        if !(self.uniqueness_ratio >= 1.0) || !(self.texture_threshold >= 0.0) {
            return Err(StereoError::InvalidSettings(
                "uniqueness ratio must be ≥ 1, texture threshold ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// Left-view disparity with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub map: FloatMap,
    pub settings: MatcherSettings,
}

impl DisparityMap {
    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.map
            .values()
            .iter()
            .copied()
            .filter(|&v| self.map.is_valid_value(v))
    }
}

fn grey(img: &ImageRGB8) -> Vec<i32> {
    img.pixels()
        .iter()
        .map(|p| p[0] as i32 + p[1] as i32 + p[2] as i32)
        .collect()
}

/// SAD block matching on rectified images with parabolic sub-pixel
/// refinement. Ambiguous or texture-less matches get the sentinel.
pub fn block_match(
    left: &ImageRGB8,
    right: &ImageRGB8,
    settings: &MatcherSettings,
) -> Result<DisparityMap> {
    settings.validate()?;
    if !left.same_size(right) {
        return Err(StereoError::SizeMismatch(
            "left and right images differ in size".into(),
        ));
    }
    let (w, h) = (left.width(), left.height());
    let win = settings.window;
    if win > w || win > h {
        return Err(StereoError::WindowTooLarge {
            window: win,
            width: w,
            height: h,
        });
    }
    let half = win / 2;
    let (gl, gr) = (grey(left), grey(right));
    let (dmin, dmax) = (settings.min_disparity, settings.max_disparity);
    let nd = dmax - dmin + 1;
    let mut out = vec![INVALID_DEPTH; w * h];

    // Column sums of |L − R| over the current window rows, one lane per disparity.
    let mut col = vec![0i32; nd * w];
    let diff = |y: usize, x: usize, d: usize| (gl[y * w + x] - gr[y * w + x - d]).abs();
    let add_row = |col: &mut [i32], y: usize, sign: i32| {
        for k in 0..nd {
            let d = dmin + k;
            let lane = &mut col[k * w..(k + 1) * w];
            for (x, c) in lane.iter_mut().enumerate().skip(d) {
                *c += sign * diff(y, x, d);
            }
        }
    };
    // Horizontal gradient column sums for the texture test.
    let grad = |y: usize, x: usize| {
        if x + 1 < w {
            (gl[y * w + x + 1] - gl[y * w + x]).abs()
        } else {
            0
        }
    };
    let mut tex_col = vec![0i32; w];
    for y in 0..win {
        add_row(&mut col, y, 1);
        for (x, t) in tex_col.iter_mut().enumerate() {
            *t += grad(y, x);
        }
    }
    let texture_min = settings.texture_threshold * (win * win) as f64;
    let mut costs = vec![i32::MAX; nd];
    for y in half..h - half {
        if y > half {
            add_row(&mut col, y + half, 1);
            add_row(&mut col, y - half - 1, -1);
            for (x, t) in tex_col.iter_mut().enumerate() {
                *t += grad(y + half, x) - grad(y - half - 1, x);
            }
        }
        let mut tex: i32 = tex_col[..win].iter().sum();
        for x in half..w - half {
            if x > half {
                tex += tex_col[x + half] - tex_col[x - half - 1];
            }
            if (tex as f64) < texture_min {
                continue;
            }
            // Only columns where the whole disparity range stays on the right image.
            if x < dmax + half {
                continue;
            }
            let kmax = nd - 1;
            for k in 0..=kmax {
                let lane = &col[k * w..(k + 1) * w];
                costs[k] = lane[x - half..=x + half].iter().sum();
            }
            let range = &costs[..=kmax];
            let (best_k, &best) = range
                .iter()
                .enumerate()
                .min_by_key(|&(_, c)| *c)
                .expect("non-empty");
            let second = range
                .iter()
                .enumerate()
                .filter(|&(k, _)| k + 1 < best_k || k > best_k + 1)
                .map(|(_, &c)| c)
                .min();
            match second {
                Some(s) if (s as f64) > settings.uniqueness_ratio * best as f64 => {}
                _ => continue,
            }
            let mut d = (dmin + best_k) as f64;
            if best_k > 0 && best_k < kmax {
                let (cm, cp) = (costs[best_k - 1] as f64, costs[best_k + 1] as f64);
                let denom = cm - 2.0 * best as f64 + cp;
                if denom > 0.0 {
                    d += (0.5 * (cm - cp) / denom).clamp(-0.5, 0.5);
                }
            }
            out[y * w + x] = d as f32;
        }
    }
    let map = FloatMap::with_sentinel(w, h, out, MapUnit::DisparityPx, INVALID_DEPTH)?;
    Ok(DisparityMap {
        map,
        settings: settings.clone(),
    })
}
