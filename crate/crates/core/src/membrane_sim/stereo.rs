use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{convolve_separable, gaussian_kernel, ExternalScene, MembraneSpec, Result, SimError};
use crate::imaging_io::ImageRGB8;
use crate::stereo_vision::{PinholeCamera, StereoRig};

/// Camera response and noise settings for vision-mode renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StereoRenderOptions {
    /// Fraction of full scale produced per lux by a white texel.
    pub exposure_per_lux: f64,
    /// 8-bit level of the membrane's own scattered glow.
    pub haze_level: f64,
    /// Blur σ in pixels at opacity 1; scales linearly with opacity.
    pub blur_per_opacity: f64,
    /// Additive per-pixel Gaussian jitter, in 8-bit levels.
    pub jitter_sigma: f64,
    /// Seeds the paint-spot layout, which is fixed to the membrane.
    pub membrane_seed: u64,
    /// Seeds everything that changes from frame to frame.
    pub frame_seed: u64,
    /// Subsamples per pixel along each axis.
    pub supersample: usize,
}

impl Default for StereoRenderOptions {
    fn default() -> Self {
        Self {
            exposure_per_lux: 0.0026,
            haze_level: 90.0,
            blur_per_opacity: 6.0,
            jitter_sigma: 1.5,
            membrane_seed: crate::DEFAULT_SEED,
            frame_seed: 0,
            supersample: 2,
        }
    }
}

impl StereoRenderOptions {
    /// Pure pinhole render: no blur, haze, paint spots or jitter.
    pub fn noiseless() -> Self {
        Self {
            haze_level: 0.0,
            blur_per_opacity: 0.0,
            jitter_sigma: 0.0,
            ..Self::default()
        }
    }
}

struct View<'a> {
    camera: &'a PinholeCamera,
    /// Camera centre and camera-to-left rotation, in left-camera coordinates.
    origin: Vector3<f64>,
    to_left: nalgebra::Matrix3<f64>,
    index: u64,
}

/// Renders the scene plane as seen by both cameras through `membrane`.
///
/// The textured fronto-parallel plane is ray cast through each camera's lens
/// model, then degraded by the membrane: its transmission mixes the scene
/// with a haze glow, a Gaussian blur grows with opacity, paint spots scale
/// pixels multiplicatively (flickering on reflective coats) and per-frame
/// jitter is added before quantisation.
pub fn render_stereo_pair(
    scene: &ExternalScene,
    membrane: &MembraneSpec,
    rig: &StereoRig,
    options: &StereoRenderOptions,
) -> Result<(ImageRGB8, ImageRGB8)> {
    scene.validate()?;
    membrane.validate()?;
    let distance = scene
        .plane_distance_mm
        .ok_or_else(|| SimError::InvalidSpec("stereo render needs a scene plane".into()))?;
    if options.supersample == 0 {
        return Err(SimError::InvalidSpec("supersample must be ≥ 1".into()));
    }
    let views = [
        View {
            camera: &rig.left,
            origin: Vector3::zeros(),
            to_left: nalgebra::Matrix3::identity(),
            index: 0,
        },
        View {
            camera: &rig.right,
            origin: rig.right_center(),
            to_left: rig.rotation.transpose(),
            index: 1,
        },
    ];
    let mut out = Vec::with_capacity(2);
    for view in &views {
        out.push(render_view(scene, distance, membrane, view, options)?);
    }
    let right = out.pop().expect("two views");
    let left = out.pop().expect("two views");
    Ok((left, right))
}

fn render_view(
    scene: &ExternalScene,
    distance: f64,
    membrane: &MembraneSpec,
    view: &View,
    options: &StereoRenderOptions,
) -> Result<ImageRGB8> {
    let cam = view.camera;
    let (w, h) = (cam.width, cam.height);
    let ss = options.supersample;
    let gain = 255.0 * scene.ambient * options.exposure_per_lux;
    let opacity = membrane.opacity;
    let mut planes = vec![vec![0.0f64; w * h]; 3];
    for v in 0..h {
        for u in 0..w {
            let mut acc = [0.0; 3];
            for sy in 0..ss {
                for sx in 0..ss {
                    let pu = u as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                    let pv = v as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5;
                    let dir = view.to_left * cam.pixel_ray(pu, pv);
                    let t = (distance - view.origin.z) / dir.z;
                    if !(dir.z > 0.0) || !(t > 0.0) {
                        return Err(SimError::PlaneBehindCamera);
                    }
                    let hit = view.origin + dir * t;
                    let c = scene.sample_mm(hit.x, hit.y);
                    acc.iter_mut().zip(c).for_each(|(a, c)| *a += c);
                }
            }
            let norm = gain / (ss * ss) as f64;
            for c in 0..3 {
                planes[c][v * w + u] =
                    (1.0 - opacity) * acc[c] * norm + opacity * options.haze_level;
            }
        }
    }

    let sigma = options.blur_per_opacity * opacity;
    if sigma > 0.0 {
        let kernel = gaussian_kernel(3.0 * sigma);
        for plane in planes.iter_mut() {
            let mean = plane.iter().sum::<f64>() / plane.len() as f64;
            *plane = convolve_separable(plane, w, h, &kernel, mean);
        }
    }

    apply_speckle(&mut planes, w, h, membrane, view.index, options);

    let mut frame_rng =
        ChaCha8Rng::seed_from_u64(options.frame_seed ^ (view.index << 56) ^ 0x9E37_79B9);
    let jitter = (options.jitter_sigma > 0.0)
        .then(|| Normal::new(0.0, options.jitter_sigma).expect("positive sigma"));
    Ok(ImageRGB8::from_fn(w, h, |x, y| {
        let mut px = [0u8; 3];
        for c in 0..3 {
            let noise = jitter.map_or(0.0, |n| n.sample(&mut frame_rng));
            px[c] = (planes[c][y * w + x] + noise).round().clamp(0.0, 255.0) as u8;
        }
        px
    }))
}

/// Scales small cross-shaped paint spots. The layout is static per camera;
/// each spot's strength flickers from frame to frame.
fn apply_speckle(
    planes: &mut [Vec<f64>],
    w: usize,
    h: usize,
    membrane: &MembraneSpec,
    index: u64,
    options: &StereoRenderOptions,
) {
    if membrane.speckle_density <= 0.0 {
        return;
    }
    let (spot_gain, flicker) = membrane.speckle_profile();
    let mut layout_rng = ChaCha8Rng::seed_from_u64(
        options
            .membrane_seed
            .wrapping_add(index.wrapping_mul(0x5851_F42D)),
    );
    let mut flicker_rng = ChaCha8Rng::seed_from_u64(
        options
            .frame_seed
            .wrapping_add(0xA076_1D64_78BD_642F ^ index),
    );
    const CROSS: [(isize, isize); 5] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)];
    let spots = (membrane.speckle_density * (w * h) as f64 / CROSS.len() as f64).round() as usize;
    for _ in 0..spots {
        let (x, y) = (
            layout_rng.random_range(0..w) as isize,
            layout_rng.random_range(0..h) as isize,
        );
        let xi: f64 = StandardNormal.sample(&mut flicker_rng);
        let factor = (1.0 + spot_gain * (1.0 + flicker * xi)).max(0.0);
        for (dx, dy) in CROSS {
            let (px, py) = (x + dx, y + dy);
            if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                continue;
            }
            let i = py as usize * w + px as usize;
            planes.iter_mut().for_each(|p| p[i] *= factor);
        }
    }
}
