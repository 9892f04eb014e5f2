use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    add_sensor_noise, deform_membrane, render_tactile_pair, ExternalScene, IndenterSpec, LightRig,
    MembraneSpec, Result, SimError, TactileFramePair,
};
use crate::imaging_io::FloatMap;
use crate::SensorGrid;

/// Capture conditions shared by every simulated tactile press.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TactileSimConfig {
    pub grid: SensorGrid,
    pub rig: LightRig,
    /// Camera read noise in 8-bit levels.
    pub sensor_noise_sigma: f64,
    /// Room light reaching the membrane from outside, in lux.
    pub ambient_lux: f64,
    /// How far the calibration ball is pushed into the membrane.
    pub ball_press_depth_mm: f64,
}

impl Default for TactileSimConfig {
    fn default() -> Self {
        Self {
            grid: SensorGrid::DEFAULT,
            rig: LightRig::default(),
            sensor_noise_sigma: 1.5,
            ambient_lux: 339.0,
            ball_press_depth_mm: 3.0,
        }
    }
}

impl TactileSimConfig {
    /// Dark room, no read noise.
    pub fn clean() -> Self {
        Self {
            sensor_noise_sigma: 0.0,
            ambient_lux: 339.0,
            ..Self::default()
        }
    }
}

/// One calibration-ball press with its exact ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPress {
    pub frames: TactileFramePair,
    pub center_px: [f64; 2],
    /// Ball radius in pixels.
    pub radius_px: f64,
    /// Radius of the region where the membrane follows the ball's shape.
    pub contact_radius_px: f64,
    pub surface: FloatMap,
}

/// Deforms, renders and adds noise for one press. The surroundings seen
/// through the membrane are a fresh random clutter pattern per `seed`.
pub fn render_press(
    indenter: &IndenterSpec,
    membrane: &MembraneSpec,
    cfg: &TactileSimConfig,
    seed: u64,
) -> Result<(TactileFramePair, FloatMap)> {
    let surface = deform_membrane(indenter, membrane, &cfg.grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = if cfg.ambient_lux > 0.0 {
        ExternalScene::ambient_clutter(cfg.ambient_lux, rng.random())
    } else {
        ExternalScene::none()
    };
    let mut frames = render_tactile_pair(&surface, &cfg.rig, membrane, &scene, &cfg.grid)?;
    add_sensor_noise(&mut frames.frame_dx, cfg.sensor_noise_sigma, &mut rng);
    add_sensor_noise(&mut frames.frame_dy, cfg.sensor_noise_sigma, &mut rng);
    Ok((frames, surface))
}

/// Largest radius inside which the smoothed membrane still has the ball's
/// surface slope, within `SLOPE_TOLERANCE` radians on both axes.
fn wrapped_radius(
    indenter: &IndenterSpec,
    ball_radius_mm: f64,
    surface: &FloatMap,
    grid: &SensorGrid,
) -> f64 {
    let nominal = indenter.contact_radius_px(grid).unwrap_or(0.0);
    let [cx, cy] = indenter.center_px;
    let s = grid.px_per_mm;
    let r_px = ball_radius_mm * s;
    let (w, h) = (grid.width, grid.height);
    let z = |x: usize, y: usize| surface.get(x, y) as f64;
    let mut radius = nominal;
    let (x0, x1) = (
        (cx - nominal).floor().max(1.0) as usize,
        ((cx + nominal).ceil() as usize).min(w - 2),
    );
    let (y0, y1) = (
        (cy - nominal).floor().max(1.0) as usize,
        ((cy + nominal).ceil() as usize).min(h - 2),
    );
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (ox, oy) = (x as f64 - cx, y as f64 - cy);
            let rho = (ox * ox + oy * oy).sqrt();
            if rho >= radius {
                continue;
            }
            let depth = (r_px * r_px - rho * rho).sqrt();
            let gx = (z(x + 1, y) - z(x - 1, y)) * 0.5 * s;
            let gy = (z(x, y + 1) - z(x, y - 1)) * 0.5 * s;
            let off = (gx.atan() - (ox / depth).atan())
                .abs()
                .max((gy.atan() - (oy / depth).atan()).abs());
            if off > SLOPE_TOLERANCE {
                radius = rho;
            }
        }
    }
    radius
}

/// Slope mismatch beyond which a pixel no longer counts as wrapping the ball.
const SLOPE_TOLERANCE: f64 = 0.02;

/// Presses a ball of `ball_radius_mm` at `n_frames` uniformly random
/// positions that keep the whole ball and its smoothing skirt on the grid.
pub fn ball_press_sequence(
    membrane: &MembraneSpec,
    ball_radius_mm: f64,
    n_frames: usize,
    seed: u64,
    cfg: &TactileSimConfig,
) -> Result<Vec<BallPress>> {
    if !(ball_radius_mm > 0.0) {
        return Err(SimError::InvalidSpec("ball radius must be positive".into()));
    }
    if n_frames == 0 {
        return Err(SimError::InvalidSpec("need at least one press".into()));
    }
    let grid = &cfg.grid;
    let radius_px = ball_radius_mm * grid.px_per_mm;
    let margin = radius_px + membrane.stiffness_radius + 2.0;
    let (max_x, max_y) = (
        (grid.width - 1) as f64 - margin,
        (grid.height - 1) as f64 - margin,
    );
    if max_x <= margin || max_y <= margin {
        return Err(SimError::IndenterOutsideGrid);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_frames)
        .map(|_| {
            let center_px = [
                rng.random_range(margin..max_x),
                rng.random_range(margin..max_y),
            ];
            let indenter = IndenterSpec::sphere(ball_radius_mm, cfg.ball_press_depth_mm, center_px);
            let (frames, surface) = render_press(&indenter, membrane, cfg, rng.random())?;
            let contact_radius_px = wrapped_radius(&indenter, ball_radius_mm, &surface, grid);
            Ok(BallPress {
                frames,
                center_px,
                radius_px,
                contact_radius_px,
                surface,
            })
        })
        .collect()
}
