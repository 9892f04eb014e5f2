use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::imaging_io::{FloatMap, MapUnit};
use crate::membrane_sim::MembraneSpec;
use crate::SensorGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndenterShape {
    Sphere {
        radius_mm: f64,
    },
    Disk {
        diameter_mm: f64,
    },
    Plane,
    /// Indenter profile in mm above its lowest point, sampled on the sensor grid.
    Heightfield(FloatMap),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndenterSpec {
    pub shape: IndenterShape,
    pub penetration_mm: f64,
    /// Contact centre in pixels; ignored for planes and heightfields.
    pub center_px: [f64; 2],
}

impl IndenterSpec {
    pub fn disk(diameter_mm: f64, penetration_mm: f64, center_px: [f64; 2]) -> Self {
        Self {
            shape: IndenterShape::Disk { diameter_mm },
            penetration_mm,
            center_px,
        }
    }

    pub fn sphere(radius_mm: f64, penetration_mm: f64, center_px: [f64; 2]) -> Self {
        Self {
            shape: IndenterShape::Sphere { radius_mm },
            penetration_mm,
            center_px,
        }
    }

    /// Radius in pixels of the region the indenter touches at full penetration.
    pub fn contact_radius_px(&self, grid: &SensorGrid) -> Option<f64> {
        match self.shape {
            IndenterShape::Sphere { radius_mm } => {
                let d = self.penetration_mm.min(radius_mm);
                Some(
                    (radius_mm * radius_mm - (radius_mm - d).powi(2))
                        .max(0.0)
                        .sqrt()
                        * grid.px_per_mm,
                )
            }
            IndenterShape::Disk { diameter_mm } => Some(0.5 * diameter_mm * grid.px_per_mm),
            _ => None,
        }
    }

    /// Clamped indentation (mm, ≤ 0) before membrane smoothing.
    pub fn clamped_surface(&self, grid: &SensorGrid) -> Result<Vec<f64>> {
        if !(self.penetration_mm >= 0.0) || !self.penetration_mm.is_finite() {
            return Err(SimError::InvalidSpec(format!(
                "penetration {} must be ≥ 0",
                self.penetration_mm
            )));
        }
        let (w, h) = (grid.width, grid.height);
        let pen = self.penetration_mm;
        let [cx, cy] = self.center_px;
        let check_footprint = |r_px: f64| {
            if cx - r_px < 0.0
                || cy - r_px < 0.0
                || cx + r_px > (w - 1) as f64
                || cy + r_px > (h - 1) as f64
            {
                Err(SimError::IndenterOutsideGrid)
            } else {
                Ok(())
            }
        };
        let mut out = vec![0.0; w * h];
        match &self.shape {
            IndenterShape::Sphere { radius_mm } => {
                if !(*radius_mm > 0.0) {
                    return Err(SimError::InvalidSpec(
                        "sphere radius must be positive".into(),
                    ));
                }
                if pen > 0.0 {
                    check_footprint(self.contact_radius_px(grid).unwrap_or(0.0))?;
                }
                let r = *radius_mm;
                for y in 0..h {
                    for x in 0..w {
                        let dx = (x as f64 - cx) / grid.px_per_mm;
                        let dy = (y as f64 - cy) / grid.px_per_mm;
                        let rho2 = dx * dx + dy * dy;
                        if rho2 < r * r {
                            let profile = r - (r * r - rho2).sqrt();
                            out[y * w + x] = (profile - pen).min(0.0);
                        }
                    }
                }
            }
            IndenterShape::Disk { diameter_mm } => {
                if !(*diameter_mm > 0.0) {
                    return Err(SimError::InvalidSpec(
                        "disk diameter must be positive".into(),
                    ));
                }
                let r_px = 0.5 * diameter_mm * grid.px_per_mm;
                if pen > 0.0 {
                    check_footprint(r_px)?;
                }
                for y in 0..h {
                    for x in 0..w {
                        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                        if dx * dx + dy * dy <= r_px * r_px {
                            out[y * w + x] = -pen;
                        }
                    }
                }
            }
            IndenterShape::Plane => out.iter_mut().for_each(|v| *v = -pen),
            IndenterShape::Heightfield(map) => {
                if map.width() != w || map.height() != h {
                    return Err(SimError::IndenterOutsideGrid);
                }
                for (o, &p) in out.iter_mut().zip(map.values()) {
                    if map.is_valid_value(p) {
                        *o = (p as f64 - pen).min(0.0);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// 1D normalised Gaussian with σ = radius / 3, truncated at `radius`.
pub(crate) fn gaussian_kernel(radius: f64) -> Vec<f64> {
    if radius <= 0.0 {
        return vec![1.0];
    }
    let sigma = radius / 3.0;
    let half = radius.ceil() as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable convolution; samples beyond the border read as `outside`.
pub(crate) fn convolve_separable(
    data: &[f64],
    w: usize,
    h: usize,
    kernel: &[f64],
    outside: f64,
) -> Vec<f64> {
    if kernel.len() == 1 {
        return data.to_vec();
    }
    let half = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xi = x as isize + k as isize - half;
                acc += kv
                    * if xi < 0 || xi >= w as isize {
                        outside
                    } else {
                        row[xi as usize]
                    };
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let yi = y as isize + k as isize - half;
            let out_row = &mut out[y * w..(y + 1) * w];
            if yi < 0 || yi >= h as isize {
                out_row.iter_mut().for_each(|o| *o += kv * outside);
            } else {
                let src = &tmp[yi as usize * w..(yi as usize + 1) * w];
                out_row.iter_mut().zip(src).for_each(|(o, s)| *o += kv * s);
            }
        }
    }
    out
}

/// Membrane surface height (mm, ≤ 0 where indented) under `indenter`.
///
/// The clamped indenter penetration is smoothed by the membrane's stiffness
/// kernel; the rest state outside the grid is zero.
pub fn deform_membrane(
    indenter: &IndenterSpec,
    membrane: &MembraneSpec,
    grid: &SensorGrid,
) -> Result<FloatMap> {
    membrane.validate()?;
    let clamped = indenter.clamped_surface(grid)?;
    let smooth = convolve_separable(
        &clamped,
        grid.width,
        grid.height,
        &gaussian_kernel(membrane.stiffness_radius),
        0.0,
    );
    let pen = indenter.penetration_mm as f32;
    let values = smooth
        .into_iter()
        .map(|v| (v as f32).clamp(-pen, 0.0))
        .collect();
    Ok(FloatMap::from_values(
        grid.width,
        grid.height,
        values,
        MapUnit::Mm,
    )?)
}
