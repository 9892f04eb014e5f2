use super::hsv::{contact_mask, HsvFilterSpec, Mask};
use super::labels::pixel_features;
use super::mlp::CalibModel;
use super::{Result, TactileError};
use crate::imaging_io::{FloatMap, ImageRGB8, MapUnit};
use crate::membrane_sim::TactileFramePair;

/// Per-pixel surface slopes (mm/mm); zero outside the contact mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub gx: FloatMap,
    pub gy: FloatMap,
}

impl GradientField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            gx: FloatMap::zeros(width, height, MapUnit::Slope),
            gy: FloatMap::zeros(width, height, MapUnit::Slope),
        }
    }

    pub fn from_values(width: usize, height: usize, gx: Vec<f32>, gy: Vec<f32>) -> Result<Self> {
        Ok(Self {
            gx: FloatMap::from_values(width, height, gx, MapUnit::Slope)?,
            gy: FloatMap::from_values(width, height, gy, MapUnit::Slope)?,
        })
    }
}

/// Minimum contact pixels before the step-order check is trusted.
const MIN_CHECK_PIXELS: usize = 50;
/// How much stronger the swapped reading must be to flag a mismatch.
const MISMATCH_MARGIN: f64 = 1.2;

fn rb_difference(frame: &ImageRGB8, reference: &ImageRGB8) -> Vec<f64> {
    frame
        .pixels()
        .iter()
        .zip(reference.pixels())
        .map(|(p, r)| (p[0] as f64 - r[0] as f64) - (p[2] as f64 - r[2] as f64))
        .collect()
}

/// The dx step varies along x (its lit rows face each other horizontally)
/// and the dy step along y. If the opposite pairing explains the contact
/// clearly better, the frames were captured in the wrong order.
pub fn check_illumination_steps(
    pair: &TactileFramePair,
    reference: &TactileFramePair,
    mask: &Mask,
) -> Result<()> {
    if mask.count() < MIN_CHECK_PIXELS {
        return Ok(());
    }
    let (w, h) = (pair.width(), pair.height());
    let dx = rb_difference(&pair.frame_dx, &reference.frame_dx);
    let dy = rb_difference(&pair.frame_dy, &reference.frame_dy);
    let (mut matched, mut swapped) = (0.0, 0.0);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            if !mask.get(x, y) {
                continue;
            }
            let i = y * w + x;
            let ddx = |v: &[f64]| (v[i + 1] - v[i - 1]).abs();
            let ddy = |v: &[f64]| (v[i + w] - v[i - w]).abs();
            matched += ddx(&dx) + ddy(&dy);
            swapped += ddy(&dx) + ddx(&dy);
        }
    }
    if swapped > MISMATCH_MARGIN * matched {
        return Err(TactileError::IlluminationStepMismatch);
    }
    Ok(())
}

/// Runs the calibration network on every contact pixel and converts the
/// predicted angles to slopes with `tan`.
pub fn predict_gradients(
    model: &CalibModel,
    pair: &TactileFramePair,
    reference: &TactileFramePair,
    spec: &HsvFilterSpec,
) -> Result<(GradientField, Mask)> {
    let (w, h) = (pair.width(), pair.height());
    if !pair.frame_dx.same_size(&reference.frame_dx)
        || !reference.frame_dx.same_size(&reference.frame_dy)
    {
        return Err(TactileError::SizeMismatch(
            "frames and reference differ in size".into(),
        ));
    }
    if let Some([mw, mh]) = model.frame_size {
        if (mw, mh) != (w, h) {
            return Err(TactileError::SizeMismatch(format!(
                "frames are {w}x{h}, model was calibrated at {mw}x{mh}"
            )));
        }
    }
    let mask = contact_mask(pair, reference, spec);
    check_illumination_steps(pair, reference, &mask)?;
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let [ax, ay] = model.predict(&pixel_features(pair, reference, x, y));
                gx[y * w + x] = ax.tan() as f32;
                gy[y * w + x] = ay.tan() as f32;
            }
        }
    }
    Ok((GradientField::from_values(w, h, gx, gy)?, mask))
}
