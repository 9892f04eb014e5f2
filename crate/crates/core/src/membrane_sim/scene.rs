use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::imaging_io::{read_image, ImageRGB8};

/// Visual working range of the sensor, in mm.
pub const VISUAL_RANGE_MM: (f64, f64) = (50.0, 600.0);

/// Mirror-like object hovering just outside the membrane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectiveObject {
    pub center_px: [f64; 2],
    /// Radius of the rounded head facing the membrane.
    pub radius_mm: f64,
    pub standoff_mm: f64,
    pub reflectivity: f64,
}

/// Everything outside the membrane.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalScene {
    /// Fronto-parallel plane distance from the left camera, if any.
    pub plane_distance_mm: Option<f64>,
    pub texture: ImageRGB8,
    /// Physical size of one texel on the plane.
    pub texel_mm: f64,
    /// Lux-equivalent illumination of the scene.
    pub ambient: f64,
    pub reflective_object: Option<ReflectiveObject>,
}

impl ExternalScene {
    /// Dark, empty surroundings.
    pub fn none() -> Self {
        Self {
            plane_distance_mm: None,
            texture: ImageRGB8::new(1, 1),
            texel_mm: 1.0,
            ambient: 0.0,
            reflective_object: None,
        }
    }

    /// Textured plane with a seeded procedural pattern.
    pub fn textured_plane(distance_mm: f64, ambient: f64, seed: u64) -> Self {
        Self {
            plane_distance_mm: Some(distance_mm),
            texture: procedural_texture(1024, 1024, seed, 0.15),
            texel_mm: 0.25,
            ambient,
            reflective_object: None,
        }
    }

    /// Unfocused room clutter seen through the membrane in tactile mode.
    pub fn ambient_clutter(ambient: f64, seed: u64) -> Self {
        Self {
            plane_distance_mm: None,
            texture: procedural_texture(160, 120, seed, 0.25),
            texel_mm: 1.0,
            ambient,
            reflective_object: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.plane_distance_mm {
            if !(VISUAL_RANGE_MM.0..=VISUAL_RANGE_MM.1).contains(&d) {
                return Err(SimError::InvalidSpec(format!(
                    "plane distance {d} mm outside [{}, {}] mm",
                    VISUAL_RANGE_MM.0, VISUAL_RANGE_MM.1
                )));
            }
        }
        if !(self.ambient >= 0.0) || !(self.texel_mm > 0.0) {
            return Err(SimError::InvalidSpec(
                "ambient must be ≥ 0 and texel size positive".into(),
            ));
        }
        if let Some(o) = &self.reflective_object {
            if !(o.radius_mm > 0.0) || !(o.standoff_mm >= 0.0) || !(o.reflectivity >= 0.0) {
                return Err(SimError::InvalidSpec(
                    "reflective object needs radius > 0, standoff ≥ 0, reflectivity ≥ 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Bilinear, wrapping texture lookup at a point on the plane (mm, plane
    /// origin at the texture centre). Channels in `[0, 1]`.
    pub(crate) fn sample_mm(&self, x_mm: f64, y_mm: f64) -> [f64; 3] {
        let (tw, th) = (self.texture.width(), self.texture.height());
        let u = x_mm / self.texel_mm + tw as f64 / 2.0;
        let v = y_mm / self.texel_mm + th as f64 / 2.0;
        self.sample_texel(u, v)
    }

    pub(crate) fn sample_texel(&self, u: f64, v: f64) -> [f64; 3] {
        let (tw, th) = (
            self.texture.width() as isize,
            self.texture.height() as isize,
        );
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = (u - u0, v - v0);
        let wrap = |i: isize, n: isize| i.rem_euclid(n) as usize;
        let (x0, y0) = (u0 as isize, v0 as isize);
        let p = |x: isize, y: isize| self.texture.get(wrap(x, tw), wrap(y, th));
        let (a, b, c, d) = (p(x0, y0), p(x0 + 1, y0), p(x0, y0 + 1), p(x0 + 1, y0 + 1));
        let mut out = [0.0; 3];
        for ch in 0..3 {
            let top = a[ch] as f64 * (1.0 - fu) + b[ch] as f64 * fu;
            let bot = c[ch] as f64 * (1.0 - fu) + d[ch] as f64 * fu;
            out[ch] = (top * (1.0 - fv) + bot * fv) / 255.0;
        }
        out
    }
}

/// Multi-octave value noise with a mild tint; `saturation` scales the
/// per-channel deviation from grey.
pub fn procedural_texture(width: usize, height: usize, seed: u64, saturation: f64) -> ImageRGB8 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let octaves: [(usize, f64); 4] = [(32, 0.35), (16, 0.3), (8, 0.22), (4, 0.13)];
    let mut lum = vec![0.0f64; width * height];
    for &(cell, amp) in &octaves {
        let gw = width / cell + 2;
        let gh = height / cell + 2;
        let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        for y in 0..height {
            let gy = y as f64 / cell as f64;
            let (iy, fy) = (gy.floor() as usize, gy.fract());
            let sy = fy * fy * (3.0 - 2.0 * fy);
            for x in 0..width {
                let gx = x as f64 / cell as f64;
                let (ix, fx) = (gx.floor() as usize, gx.fract());
                let sx = fx * fx * (3.0 - 2.0 * fx);
                let g = |i: usize, j: usize| grid[j * gw + i];
                let top = g(ix, iy) * (1.0 - sx) + g(ix + 1, iy) * sx;
                let bot = g(ix, iy + 1) * (1.0 - sx) + g(ix + 1, iy + 1) * sx;
                lum[y * width + x] += amp * (top * (1.0 - sy) + bot * sy);
            }
        }
    }
    let tint_cell = 64usize;
    let tw = width / tint_cell + 2;
    let th = height / tint_cell + 2;
    let tints: Vec<[f64; 3]> = (0..tw * th)
        .map(|_| {
            [
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ]
        })
        .collect();
    ImageRGB8::from_fn(width, height, |x, y| {
        let l = lum[y * width + x];
        let t = tints[(y / tint_cell) * tw + x / tint_cell];
        let mut px = [0u8; 3];
        for c in 0..3 {
            let v = (0.08 + 0.92 * l) * (1.0 + saturation * t[c]);
            px[c] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
        }
        px
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureSpec {
    Procedural {
        seed: u64,
        width: usize,
        height: usize,
        texel_mm: f64,
    },
    File {
        path: PathBuf,
        texel_mm: f64,
    },
}

/// JSON form of [`ExternalScene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub plane_distance_mm: Option<f64>,
    pub texture: TextureSpec,
    pub ambient: f64,
    #[serde(default)]
    pub reflective_object: Option<ReflectiveObject>,
}

impl SceneSpec {
    pub fn build(&self) -> Result<ExternalScene> {
        let (texture, texel_mm) = match &self.texture {
            TextureSpec::Procedural {
                seed,
                width,
                height,
                texel_mm,
            } => {
                if *width == 0 || *height == 0 {
                    return Err(SimError::InvalidSpec("texture must be at least 1x1".into()));
                }
                (procedural_texture(*width, *height, *seed, 0.15), *texel_mm)
            }
            TextureSpec::File { path, texel_mm } => (read_image(path)?, *texel_mm),
        };
        let scene = ExternalScene {
            plane_distance_mm: self.plane_distance_mm,
            texture,
            texel_mm,
            ambient: self.ambient,
            reflective_object: self.reflective_object.clone(),
        };
        scene.validate()?;
        Ok(scene)
    }
}
