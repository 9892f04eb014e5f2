//! Depth-quality harness: plane fitting, signed Z-accuracy, spatial RMSE and
//! temporal noise, all as percentages of the ground-truth distance, plus
//! assembly of the per-distance report tables.

mod metrics;
mod plane;

pub use metrics::{
    evaluate_sequence, spatial_rmse_pct, temporal_noise_pct, z_accuracy, EvalResult,
    FrameDiagnostics,
};
pub use plane::{fit_plane, fit_plane_samples, PlaneFit};

use serde::{Deserialize, Serialize};

use crate::imaging_io::{CellUnit, ReportCell, ReportTable};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("no valid pixels in the region of interest")]
    EmptyRoi,
    #[error("plane fit is rank deficient (collinear valid pixels)")]
    RankDeficient,
    #[error("frame size mismatch: {0}")]
    SizeMismatch(String),
    #[error("temporal noise needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    /// Centred rectangle covering `fraction` of each image dimension.
    pub fn central(width: usize, height: usize, fraction: f64) -> Self {
        let rw = ((width as f64 * fraction).round() as usize).clamp(1, width.max(1));
        let rh = ((height as f64 * fraction).round() as usize).clamp(1, height.max(1));
        Self {
            x0: (width - rw) / 2,
            y0: (height - rh) / 2,
            width: rw,
            height: rh,
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..self.y0 + self.height)
            .flat_map(move |y| (self.x0..self.x0 + self.width).map(move |x| (x, y)))
    }

    fn fits(&self, width: usize, height: usize) -> bool {
        self.width > 0
            && self.height > 0
            && self.x0 + self.width <= width
            && self.y0 + self.height <= height
    }
}

/// Pinhole used to lift depth pixels to 3D points for tilt correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthIntrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
}

pub const DEFAULT_ROI_FRACTION: f64 = 0.6;
pub const DEFAULT_FOCAL_PX: f64 = 800.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub gt_mm: f64,
    /// Defaults to the central 60 % of the frame.
    #[serde(default)]
    pub roi: Option<Roi>,
    #[serde(default = "default_frame_count")]
    pub frame_count: usize,
    #[serde(default)]
    pub membrane: String,
    /// Report `median(|D − GT|)` instead of the signed median.
    #[serde(default)]
    pub absolute_z_accuracy: bool,
    /// Defaults to an 800 px pinhole centred on the map.
    #[serde(default)]
    pub intrinsics: Option<DepthIntrinsics>,
}

fn default_frame_count() -> usize {
    10
}

impl EvalConfig {
    pub fn new(gt_mm: f64, membrane: &str) -> Self {
        Self {
            gt_mm,
            roi: None,
            frame_count: default_frame_count(),
            membrane: membrane.to_string(),
            absolute_z_accuracy: false,
            intrinsics: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gt_mm > 0.0) || !self.gt_mm.is_finite() {
            return Err(EvalError::InvalidConfig(format!(
                "ground truth {} must be positive",
                self.gt_mm
            )));
        }
        if let Some(r) = self.roi {
            if r.width == 0 || r.height == 0 {
                return Err(EvalError::InvalidConfig("empty ROI".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn roi_for(&self, width: usize, height: usize) -> Result<Roi> {
        let roi = self
            .roi
            .unwrap_or_else(|| Roi::central(width, height, DEFAULT_ROI_FRACTION));
        if !roi.fits(width, height) {
            return Err(EvalError::InvalidConfig(format!(
                "ROI {roi:?} outside {width}x{height} map"
            )));
        }
        Ok(roi)
    }

    pub(crate) fn intrinsics_for(&self, width: usize, height: usize) -> DepthIntrinsics {
        self.intrinsics.unwrap_or(DepthIntrinsics {
            f: DEFAULT_FOCAL_PX,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        })
    }
}

/// Median of a slice, reordering it; `None` when empty.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mid = n / 2;
    let (_, &mut hi, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        return Some(hi);
    }
    let lo = values[..mid]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Some(0.5 * (lo + hi))
}

/// Which metric a report table carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMetric {
    ZAccuracy,
    SpatialRmse,
    TemporalNoise,
}

impl ReportMetric {
    pub fn title(self) -> &'static str {
        match self {
            ReportMetric::ZAccuracy => "Z-accuracy (%)",
            ReportMetric::SpatialRmse => "Spatial RMSE (%)",
            ReportMetric::TemporalNoise => "Temporal noise (%)",
        }
    }
}

/// Report row order, in mm.
pub const REPORT_DISTANCES_MM: [f64; 5] = [100.0, 150.0, 200.0, 250.0, 300.0];

/// Distance × membrane table for one metric. Cells with no result stay
/// empty; results at distances outside the standard rows are ignored.
pub fn assemble_report(
    results: &[EvalResult],
    metric: ReportMetric,
    membranes: &[&str],
) -> ReportTable {
    let rows: Vec<String> = REPORT_DISTANCES_MM.iter().map(|d| format!("{d}")).collect();
    let cols: Vec<String> = membranes.iter().map(|m| m.to_string()).collect();
    let mut table = ReportTable::new(metric.title(), "distance_mm", rows, cols);
    for r in results {
        let Some(row) = REPORT_DISTANCES_MM
            .iter()
            .position(|&d| (d - r.gt_mm).abs() < 1e-9)
        else {
            continue;
        };
        let Some(col) = membranes.iter().position(|&m| m == r.membrane) else {
            continue;
        };
        let cell = match metric {
            ReportMetric::ZAccuracy => ReportCell::new(r.z_accuracy_pct, CellUnit::Percent),
            ReportMetric::SpatialRmse => {
                ReportCell::with_spread(r.rmse_pct_mean, r.rmse_pct_std, CellUnit::Percent)
            }
            ReportMetric::TemporalNoise => ReportCell::new(r.temporal_noise_pct, CellUnit::Percent),
        };
        table.set(row, col, cell);
    }
    table
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Membrane × {mean, std} table of disk-press depths (mm).
pub fn assemble_tactile_report(rows: &[(String, Vec<f64>)]) -> ReportTable {
    let labels = rows.iter().map(|(m, _)| m.clone()).collect();
    let mut table = ReportTable::new(
        "Disk press depth (mm)",
        "membrane",
        labels,
        vec!["mean".into(), "std".into()],
    );
    for (i, (_, depths)) in rows.iter().enumerate() {
        if depths.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(depths);
        table.set(i, 0, ReportCell::new(mean, CellUnit::Mm));
        table.set(i, 1, ReportCell::new(std, CellUnit::Mm));
    }
    table
}
