//! Vision-mode pipeline: stereo calibration from checkerboard corners,
//! rectification, SAD block matching, Q-matrix reprojection and statistical
//! outlier removal.

mod block_match;
mod calibration;
mod camera;
mod outliers;
mod rectify;
mod reproject;

pub use block_match::{block_match, DisparityMap, MatcherSettings};
pub use calibration::{
    calibrate_stereo, synthetic_corner_frames, BoardSpec, CornerFrame, SyntheticViews,
};
pub use camera::{PinholeCamera, Rectification, StereoRig};
pub use outliers::{remove_outliers, OutlierStats};
pub use rectify::{rectify_pair, rectify_point, RectifyMaps, Side};
pub use reproject::{reproject, Reprojection};

use crate::imaging_io::IoError;

#[derive(Debug, thiserror::Error)]
pub enum StereoError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("insufficient pose diversity: {0}")]
    InsufficientPoseDiversity(String),
    #[error("malformed corner data: {0}")]
    MalformedCorners(String),
    #[error("calibration did not converge: {0}")]
    CalibrationFailed(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("window {window} larger than image {width}x{height}")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid matcher settings: {0}")]
    InvalidSettings(String),
    #[error("cloud too small: {points} points for k = {k}")]
    CloudTooSmall { points: usize, k: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T> = std::result::Result<T, StereoError>;
