use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lights::{Edge, ROW_EDGES};
use super::{ExternalScene, IlluminationStep, LedColor, LightRig, MembraneSpec, Result, SimError};
use crate::imaging_io::{FloatMap, ImageRGB8, MapUnit};
use crate::SensorGrid;

/// Camera exposure in tactile mode: 8-bit levels per lux of scene light that
/// reaches the sensor unobstructed.
pub const TACTILE_LEVELS_PER_LUX: f64 = 0.2;

/// The two sequentially lit frames of one tactile capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileFramePair {
    pub frame_dx: ImageRGB8,
    pub frame_dy: ImageRGB8,
}

impl TactileFramePair {
    pub fn new(frame_dx: ImageRGB8, frame_dy: ImageRGB8) -> Result<Self> {
        if !frame_dx.same_size(&frame_dy) {
            return Err(SimError::InvalidSpec(
                "dx and dy frames differ in size".into(),
            ));
        }
        Ok(Self { frame_dx, frame_dy })
    }

    pub fn frame(&self, step: IlluminationStep) -> &ImageRGB8 {
        match step {
            IlluminationStep::Dx => &self.frame_dx,
            IlluminationStep::Dy => &self.frame_dy,
        }
    }

    pub fn width(&self) -> usize {
        self.frame_dx.width()
    }

    pub fn height(&self) -> usize {
        self.frame_dx.height()
    }
}

const FLAT: [f64; 3] = [0.0, 0.0, 1.0];

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

struct LitRow {
    edge: Edge,
    channel: usize,
    dir: [f64; 3],
    half: [f64; 3],
}

fn lit_rows(rig: &LightRig, step: IlluminationStep) -> Vec<LitRow> {
    let elevation = rig.elevation_deg.to_radians();
    rig.rows(step)
        .iter()
        .zip(ROW_EDGES)
        .filter_map(|(&color, edge)| {
            let channel = match color {
                LedColor::Red => 0,
                LedColor::Blue => 2,
                LedColor::Off => return None,
            };
            let dir = edge.direction(elevation);
            let half = normalize([dir[0], dir[1], dir[2] + 1.0]);
            Some(LitRow {
                edge,
                channel,
                dir,
                half,
            })
        })
        .collect()
}

/// Unit normal facing the camera, from surface slopes in mm/mm.
fn surface_normals(surface: &FloatMap, px_per_mm: f64) -> Vec<[f64; 3]> {
    let (w, h) = (surface.width(), surface.height());
    let height = |x: usize, y: usize| surface.valid(x, y).unwrap_or(0.0) as f64;
    let mut normals = vec![[0.0, 0.0, 1.0]; w * h];
    for y in 0..h {
        for x in 0..w {
            if surface.valid(x, y).is_none() {
                continue;
            }
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let gx = if x1 > x0 {
                (height(x1, y) - height(x0, y)) / (x1 - x0) as f64
            } else {
                0.0
            };
            let gy = if y1 > y0 {
                (height(x, y1) - height(x, y0)) / (y1 - y0) as f64
            } else {
                0.0
            };
            normals[y * w + x] = normalize([gx * px_per_mm, gy * px_per_mm, 1.0]);
        }
    }
    normals
}

/// Camera-facing normals of the reflective object's rounded head, laid out
/// on the image grid; `None` outside its footprint.
fn object_normals(
    scene: &ExternalScene,
    w: usize,
    h: usize,
    px_per_mm: f64,
) -> Option<(Vec<Option<[f64; 3]>>, f64)> {
    let obj = scene.reflective_object.as_ref()?;
    let r = obj.radius_mm * px_per_mm;
    let [cx, cy] = obj.center_px;
    let normals = (0..w * h)
        .map(|i| {
            let (dx, dy) = (((i % w) as f64 - cx) / r, ((i / w) as f64 - cy) / r);
            let rho2 = dx * dx + dy * dy;
            (rho2 < 1.0).then(|| [dx, dy, (1.0 - rho2).sqrt()])
        })
        .collect();
    let geometric = obj.reflectivity / (1.0 + obj.standoff_mm).powi(2);
    Some((normals, geometric))
}

/// Scene radiance seen through the membrane, in 8-bit levels, stretched
/// over the grid. Shared by both illumination steps.
fn scene_layer(
    membrane: &MembraneSpec,
    scene: &ExternalScene,
    w: usize,
    h: usize,
) -> Option<Vec<[f64; 3]>> {
    let gain = membrane.transmission() * scene.ambient * TACTILE_LEVELS_PER_LUX;
    if !(gain > 0.0) {
        return None;
    }
    let (tw, th) = (scene.texture.width() as f64, scene.texture.height() as f64);
    let mut layer = Vec::with_capacity(w * h);
    for y in 0..h {
        let v = (y as f64 + 0.5) * th / h as f64 - 0.5;
        for x in 0..w {
            let u = (x as f64 + 0.5) * tw / w as f64 - 0.5;
            layer.push(scene.sample_texel(u, v).map(|c| gain * c));
        }
    }
    Some(layer)
}

#[allow(clippy::too_many_arguments)]
fn render_step(
    normals: &[[f64; 3]],
    object: Option<&(Vec<Option<[f64; 3]>>, f64)>,
    scene: Option<&[[f64; 3]]>,
    rig: &LightRig,
    step: IlluminationStep,
    membrane: &MembraneSpec,
    w: usize,
    h: usize,
) -> ImageRGB8 {
    let rows = lit_rows(rig, step);
    let (albedo, gloss, shininess) = (
        membrane.albedo(),
        membrane.gloss(),
        membrane.specular_exponent,
    );
    let transmission = membrane.transmission();
    let leak_gain = transmission * transmission;
    // Falloff depends on x alone for side rows and on y alone otherwise.
    let falloff_tables: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| {
            let len = if matches!(row.edge, Edge::Left | Edge::Right) {
                w
            } else {
                h
            };
            (0..len)
                .map(|i| {
                    let d = row.edge.distance(i as f64, i as f64, w, h);
                    rig.intensity * (-rig.attenuation_coeff * d).exp()
                })
                .collect()
        })
        .collect();
    ImageRGB8::from_fn(w, h, |x, y| {
        let n = normals[y * w + x];
        let mut acc = [0.0f64; 3];
        for (row, table) in rows.iter().zip(&falloff_tables) {
            let falloff = table[if matches!(row.edge, Edge::Left | Edge::Right) {
                x
            } else {
                y
            }];
            let lambert = dot(n, row.dir);
            if lambert > 0.0 {
                let spec = if gloss <= 0.0 {
                    0.0
                } else if n == FLAT {
                    gloss * row.half[2].powf(shininess)
                } else {
                    gloss * dot(n, row.half).max(0.0).powf(shininess)
                };
                acc[row.channel] += falloff * (albedo * lambert + spec);
            }
            if let Some((obj, geometric)) = object {
                if let Some(no) = obj[y * w + x] {
                    acc[row.channel] += falloff * geometric * leak_gain * dot(no, row.dir).max(0.0);
                }
            }
        }
        if let Some(layer) = scene {
            let radiance = layer[y * w + x];
            for c in 0..3 {
                acc[c] += radiance[c];
            }
        }
        acc.map(|v| v.round().clamp(0.0, 255.0) as u8)
    })
}

/// Renders the dx-step and dy-step frames of `surface` (height in mm, ≤ 0
/// where indented) on the tactile grid.
///
/// Each lit row contributes Lambert shading plus a specular lobe, attenuated
/// exponentially with distance to the row. The external scene adds
/// `(1 − opacity)` of its radiance and a reflective object just outside the
/// membrane bounces LED light back through it twice.
pub fn render_tactile_pair(
    surface: &FloatMap,
    rig: &LightRig,
    membrane: &MembraneSpec,
    scene: &ExternalScene,
    grid: &SensorGrid,
) -> Result<TactileFramePair> {
    rig.validate()?;
    membrane.validate()?;
    scene.validate()?;
    let (w, h) = (surface.width(), surface.height());
    if w != grid.width || h != grid.height {
        return Err(SimError::InvalidSpec(format!(
            "surface is {w}x{h}, grid is {}x{}",
            grid.width, grid.height
        )));
    }
    let normals = surface_normals(surface, grid.px_per_mm);
    let object = object_normals(scene, w, h, grid.px_per_mm);
    let layer = scene_layer(membrane, scene, w, h);
    let layer = layer.as_deref();
    let frame_dx = render_step(
        &normals,
        object.as_ref(),
        layer,
        rig,
        IlluminationStep::Dx,
        membrane,
        w,
        h,
    );
    let frame_dy = render_step(
        &normals,
        object.as_ref(),
        layer,
        rig,
        IlluminationStep::Dy,
        membrane,
        w,
        h,
    );
    Ok(TactileFramePair { frame_dx, frame_dy })
}

/// No-contact pair in a dark room, used for background subtraction.
pub fn render_reference_pair(
    rig: &LightRig,
    membrane: &MembraneSpec,
    grid: &SensorGrid,
) -> Result<TactileFramePair> {
    let flat = FloatMap::zeros(grid.width, grid.height, MapUnit::Mm);
    render_tactile_pair(&flat, rig, membrane, &ExternalScene::none(), grid)
}

/// Adds zero-mean Gaussian read noise of `sigma` levels to every channel.
pub fn add_sensor_noise<R: Rng>(frame: &mut ImageRGB8, sigma: f64, rng: &mut R) {
    if !(sigma > 0.0) {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    for px in frame.pixels_mut() {
        for c in px.iter_mut() {
            *c = (*c as f64 + normal.sample(rng)).round().clamp(0.0, 255.0) as u8;
        }
    }
}
