//! Simulation, reconstruction and evaluation stack for a visuotactile sensor
//! that combines two-step photometric stereo with stereoscopic vision behind
//! a semi-transparent membrane.
//!
//! * [`imaging_io`]: PPM / PFM / PLY / CSV+JSON readers and writers.
//! * [`membrane_sim`]: rendering oracle standing in for the physical sensor.
//! * [`tactile_recon`]: colour isolation, ball-press labelling, gradient
//!   regression and Poisson integration to a millimetre depth map.
//! * [`stereo_vision`]: calibration, rectification, block matching,
//!   reprojection and statistical outlier removal.
//! * [`depth_eval`]: plane fitting, Z-accuracy, spatial RMSE and temporal
//!   noise, plus report assembly.
//! * [`experiments`]: end-to-end drivers shared by the CLI and the
//!   acceptance suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depth_eval;
pub mod experiments;
pub mod imaging_io;
pub mod membrane_sim;
pub mod stereo_vision;
pub mod tactile_recon;

use serde::{Deserialize, Serialize};

/// Pixel grid of the tactile camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorGrid {
    pub width: usize,
    pub height: usize,
    pub px_per_mm: f64,
}

impl SensorGrid {
    pub const DEFAULT: SensorGrid = SensorGrid {
        width: 640,
        height: 480,
        px_per_mm: 15.0,
    };
}

impl Default for SensorGrid {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Default seed used whenever a caller does not supply one.
pub const DEFAULT_SEED: u64 = 0x5713_7AC0;
