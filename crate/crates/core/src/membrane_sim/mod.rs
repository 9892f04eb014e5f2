//! Rendering oracle standing in for the physical sensor.
//!
//! A virtual membrane is pressed by an indenter ([`deform_membrane`]), lit by
//! the two-step LED schedule ([`render_tactile_pair`]) or looked through by
//! the stereo cameras ([`render_stereo_pair`]). Every random draw comes from a
//! caller-supplied seed, so renders are reproducible bit for bit.

mod ball;
mod indenter;
mod lights;
mod membrane;
mod scene;
mod stereo;
mod tactile;

pub use ball::{ball_press_sequence, render_press, BallPress, TactileSimConfig};
pub use indenter::{deform_membrane, IndenterShape, IndenterSpec};
pub use lights::{IlluminationStep, LedColor, LightRig};
pub use membrane::{measure_opacity, Finish, MembraneSpec, OpacityReading, BENCH_SOURCE_LUX};
pub use scene::{
    procedural_texture, ExternalScene, ReflectiveObject, SceneSpec, TextureSpec, VISUAL_RANGE_MM,
};
pub use stereo::{render_stereo_pair, StereoRenderOptions};
pub use tactile::{
    add_sensor_noise, render_reference_pair, render_tactile_pair, TactileFramePair,
    TACTILE_LEVELS_PER_LUX,
};

pub(crate) use indenter::{convolve_separable, gaussian_kernel};

use crate::imaging_io::IoError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("indenter larger than the sensor grid")]
    IndenterOutsideGrid,
    #[error("plane behind camera")]
    PlaneBehindCamera,
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T> = std::result::Result<T, SimError>;
