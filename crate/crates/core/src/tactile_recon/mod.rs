//! Tactile pipeline: colour isolation, ball-press labelling, gradient
//! regression and Poisson integration to a millimetre depth map.
//!
//! Frames are compared against a stored no-contact reference pair, which
//! removes the static illumination pattern before masking and feature
//! extraction.

mod disk;
mod gradients;
mod hsv;
mod labels;
mod mlp;
mod poisson;

pub use disk::{measure_disk_depth, PLATEAU_FRACTION};
pub use gradients::{check_illumination_steps, predict_gradients, GradientField};
pub use hsv::{contact_mask, flat_field, hsv_mask, rgb_to_hsv, HsvFilterSpec, Mask};
pub use labels::{
    ball_label, decode_dataset, encode_dataset, gen_ball_labels, pixel_features, read_dataset,
    write_dataset, CalibrationSample, DATASET_HEADER,
};
pub use mlp::{
    fit_calibration, CalibModel, DenseLayer, TrainConfig, MAX_ANGLE, RECOMMENDED_SAMPLES,
};
pub use poisson::{integrate_fast_poisson, solve_poisson_dirichlet};

use crate::imaging_io::{FloatMap, IoError};
use crate::membrane_sim::{BallPress, TactileFramePair};

#[derive(Debug, thiserror::Error)]
pub enum TactileError {
    #[error("empty calibration frame")]
    EmptyCalibrationFrame,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("malformed dataset at line {line}: {message}")]
    MalformedDataset { line: usize, message: String },
    #[error("illumination step mismatch: dx and dy frames appear swapped")]
    IlluminationStepMismatch,
    #[error("non-finite gradient value at index {0}")]
    NonFiniteGradient(usize),
    #[error("gradient field {width}x{height} is smaller than 3x3")]
    GridTooSmall { width: usize, height: usize },
    #[error("region empty")]
    RegionEmpty,
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T> = std::result::Result<T, TactileError>;

/// Labels a whole press set. Labels are restricted to the contact
/// footprint, where the membrane follows the ball exactly.
pub fn label_presses(
    presses: &[BallPress],
    reference: &TactileFramePair,
    spec: &HsvFilterSpec,
) -> Result<Vec<CalibrationSample>> {
    let mut all = Vec::new();
    for p in presses {
        match gen_ball_labels(
            &p.frames,
            reference,
            p.center_px,
            p.radius_px,
            Some(p.contact_radius_px),
            spec,
        ) {
            Ok(s) => all.extend(s),
            Err(TactileError::EmptyCalibrationFrame) => {
                log::warn!("press at {:?} produced no contact pixels", p.center_px)
            }
            Err(e) => return Err(e),
        }
    }
    if all.is_empty() {
        return Err(TactileError::EmptyDataset);
    }
    Ok(all)
}

/// Everything produced from one tactile capture.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub gradients: GradientField,
    pub mask: Mask,
    /// Indentation depth in mm, clamped to be non-negative.
    pub depth: FloatMap,
}

impl Reconstruction {
    pub fn peak_depth(&self) -> f64 {
        self.depth
            .values()
            .iter()
            .fold(0.0f64, |m, &v| m.max(v as f64))
    }
}

/// Frames → gradients → depth (mm, ≥ 0).
pub fn reconstruct(
    model: &CalibModel,
    pair: &TactileFramePair,
    reference: &TactileFramePair,
    spec: &HsvFilterSpec,
    px_per_mm: f64,
) -> Result<Reconstruction> {
    let (gradients, mask) = predict_gradients(model, pair, reference, spec)?;
    let mut depth = integrate_fast_poisson(&gradients, px_per_mm)?;
    depth.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(Reconstruction {
        gradients,
        mask,
        depth,
    })
}
