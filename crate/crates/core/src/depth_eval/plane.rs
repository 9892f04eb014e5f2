use nalgebra::{Matrix3, Vector3};

use super::{EvalError, Result, Roi};
use crate::imaging_io::FloatMap;

/// Least-squares plane `z = a·x + b·y + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `z − (a·x + b·y + c)` for every sample, in input order.
    pub residuals: Vec<f64>,
}

impl PlaneFit {
    pub fn rms(&self) -> f64 {
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len() as f64).sqrt()
    }
}

/// Fits a plane to `(x, y, z)` samples. Coordinates are centred first so
/// large offsets do not hurt conditioning.
pub fn fit_plane_samples(samples: &[[f64; 3]]) -> Result<PlaneFit> {
    if samples.len() < 3 {
        return Err(EvalError::RankDeficient);
    }
    let n = samples.len() as f64;
    let sum = samples
        .iter()
        .fold([0.0; 3], |m, s| [m[0] + s[0], m[1] + s[1], m[2] + s[2]]);
    let mean = [sum[0] / n, sum[1] / n, sum[2] / n];
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in samples {
        let (x, y, z) = (s[0] - mean[0], s[1] - mean[1], s[2] - mean[2]);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxz += x * z;
        syz += y * z;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-10 * (sxx + syy).powi(2)) {
        return Err(EvalError::RankDeficient);
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    let c = mean[2] - a * mean[0] - b * mean[1];
    let residuals = samples
        .iter()
        .map(|s| s[2] - (a * s[0] + b * s[1] + c))
        .collect();
    Ok(PlaneFit { a, b, c, residuals })
}

/// Valid `(x, y, z)` samples of `depth` inside `roi`.
pub(crate) fn roi_samples(depth: &FloatMap, roi: &Roi) -> Vec<[f64; 3]> {
    roi.pixels()
        .filter_map(|(x, y)| depth.valid(x, y).map(|z| [x as f64, y as f64, z as f64]))
        .collect()
}

/// Plane through the valid depth pixels of `roi`, in pixel coordinates.
pub fn fit_plane(depth: &FloatMap, roi: &Roi) -> Result<PlaneFit> {
    let samples = roi_samples(depth, roi);
    if samples.is_empty() {
        return Err(EvalError::EmptyRoi);
    }
    fit_plane_samples(&samples)
}

/// Rotation taking the unit normal `n` onto +z, about the axis `n × z`.
pub(crate) fn align_to_z(n: &Vector3<f64>) -> Matrix3<f64> {
    let z = Vector3::z();
    let n = if n.z < 0.0 { -n } else { *n };
    nalgebra::Rotation3::rotation_between(&n, &z).map_or(Matrix3::identity(), |r| r.into_inner())
}
