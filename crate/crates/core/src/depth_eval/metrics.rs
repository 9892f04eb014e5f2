use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::plane::{align_to_z, fit_plane_samples, roi_samples};
use super::{fit_plane, mean_std, median_in_place, EvalConfig, EvalError, Result};
use crate::imaging_io::FloatMap;

fn check_map(depth: &FloatMap, cfg: &EvalConfig) -> Result<super::Roi> {
    cfg.validate()?;
    cfg.roi_for(depth.width(), depth.height())
}

/// Signed median depth error in percent of GT after tilt correction.
///
/// Valid ROI pixels are lifted to 3D with the configured pinhole, the point
/// set is rotated about its centroid so that the best-fit plane normal
/// becomes the optical axis, and the rotated depths are compared to GT.
pub fn z_accuracy(depth: &FloatMap, cfg: &EvalConfig) -> Result<f64> {
    let roi = check_map(depth, cfg)?;
    let k = cfg.intrinsics_for(depth.width(), depth.height());
    let points: Vec<[f64; 3]> = roi_samples(depth, &roi)
        .into_iter()
        .map(|[x, y, z]| [(x - k.cx) * z / k.f, (y - k.cy) * z / k.f, z])
        .collect();
    if points.is_empty() {
        return Err(EvalError::EmptyRoi);
    }
    let n = points.len() as f64;
    let centroid = points
        .iter()
        .fold(Vector3::zeros(), |c, p| c + Vector3::from(*p) / n);
    let rotation = match fit_plane_samples(&points) {
        Ok(fit) => align_to_z(&Vector3::new(-fit.a, -fit.b, 1.0).normalize()),
        Err(_) => nalgebra::Matrix3::identity(),
    };
    let normal_row = rotation.row(2).transpose();
    let mut errors: Vec<f64> = points
        .iter()
        .map(|p| {
            let d = centroid.z + normal_row.dot(&(Vector3::from(*p) - centroid));
            let e = d - cfg.gt_mm;
            if cfg.absolute_z_accuracy {
                e.abs()
            } else {
                e
            }
        })
        .collect();
    let med = median_in_place(&mut errors).ok_or(EvalError::EmptyRoi)?;
    Ok(med / cfg.gt_mm * 100.0)
}

/// RMS of the best-fit-plane residuals in percent of GT.
pub fn spatial_rmse_pct(depth: &FloatMap, cfg: &EvalConfig) -> Result<f64> {
    let roi = check_map(depth, cfg)?;
    Ok(fit_plane(depth, &roi)?.rms() / cfg.gt_mm * 100.0)
}

/// Mean over ROI pixels of the population standard deviation of depth
/// across frames, in percent of GT. A pixel counts when it is valid in at
/// least two frames; its deviation uses the frames where it is valid.
pub fn temporal_noise_pct(frames: &[FloatMap], cfg: &EvalConfig) -> Result<f64> {
    if frames.len() < 2 {
        return Err(EvalError::TooFewFrames(frames.len()));
    }
    let first = &frames[0];
    if let Some(f) = frames.iter().find(|f| !f.same_size(first)) {
        return Err(EvalError::SizeMismatch(format!(
            "{}x{} vs {}x{}",
            f.width(),
            f.height(),
            first.width(),
            first.height()
        )));
    }
    let roi = check_map(first, cfg)?;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut samples = Vec::with_capacity(frames.len());
    for (x, y) in roi.pixels() {
        samples.clear();
        samples.extend(
            frames
                .iter()
                .filter_map(|f| f.valid(x, y))
                .map(|v| v as f64),
        );
        if samples.len() < 2 {
            continue;
        }
        total += mean_std(&samples).1;
        count += 1;
    }
    if count == 0 {
        return Err(EvalError::EmptyRoi);
    }
    Ok(total / count as f64 / cfg.gt_mm * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub z_accuracy_pct: f64,
    pub rmse_pct: f64,
    pub valid_pixels: usize,
}

/// Metrics of one membrane × distance cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub membrane: String,
    pub gt_mm: f64,
    /// Mean over frames of the per-frame Z-accuracy.
    pub z_accuracy_pct: f64,
    pub rmse_pct_mean: f64,
    /// Population standard deviation of the per-frame RMSE.
    pub rmse_pct_std: f64,
    pub temporal_noise_pct: f64,
    pub per_frame: Vec<FrameDiagnostics>,
}

impl EvalResult {
    /// All-zero result, the outcome of a perfect plane sequence.
    pub fn perfect(gt_mm: f64, membrane: &str) -> Self {
        Self {
            membrane: membrane.to_string(),
            gt_mm,
            z_accuracy_pct: 0.0,
            rmse_pct_mean: 0.0,
            rmse_pct_std: 0.0,
            temporal_noise_pct: 0.0,
            per_frame: Vec::new(),
        }
    }
}

pub fn evaluate_sequence(frames: &[FloatMap], cfg: &EvalConfig) -> Result<EvalResult> {
    let temporal_noise_pct = temporal_noise_pct(frames, cfg)?;
    let per_frame = frames
        .iter()
        .map(|f| {
            let roi = cfg.roi_for(f.width(), f.height())?;
            Ok(FrameDiagnostics {
                z_accuracy_pct: z_accuracy(f, cfg)?,
                rmse_pct: spatial_rmse_pct(f, cfg)?,
                valid_pixels: roi
                    .pixels()
                    .filter(|&(x, y)| f.valid(x, y).is_some())
                    .count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let z: Vec<f64> = per_frame.iter().map(|d| d.z_accuracy_pct).collect();
    let rmse: Vec<f64> = per_frame.iter().map(|d| d.rmse_pct).collect();
    let (rmse_pct_mean, rmse_pct_std) = mean_std(&rmse);
    Ok(EvalResult {
        membrane: cfg.membrane.clone(),
        gt_mm: cfg.gt_mm,
        z_accuracy_pct: mean_std(&z).0,
        rmse_pct_mean,
        rmse_pct_std,
        temporal_noise_pct,
        per_frame,
    })
}
