use nalgebra::Vector4;

use super::{DisparityMap, StereoRig};
use crate::imaging_io::{ImageRGB8, PointCloud3D};

/// Cloud from [`reproject`] plus the pixels that could not be placed.
#[derive(Debug, Clone, PartialEq)]
pub struct Reprojection {
    pub cloud: PointCloud3D,
    /// Pixel index of every point, row-major in the disparity map.
    pub pixel_index: Vec<usize>,
    /// Valid pixels dropped for zero or negative disparity.
    pub skipped_nonpositive: usize,
}

/// Maps every valid `(x, y, d)` through Q into the rectified left frame (mm).
/// When `colors` is given, each point takes the colour of its pixel.
pub fn reproject(
    disparity: &DisparityMap,
    rig: &StereoRig,
    colors: Option<&ImageRGB8>,
) -> Reprojection {
    let map = &disparity.map;
    let q = rig.rectification.q;
    let mut points = Vec::new();
    let mut rgb = Vec::new();
    let mut pixel_index = Vec::new();
    let mut skipped = 0;
    for y in 0..map.height() {
        for x in 0..map.width() {
            let Some(d) = map.valid(x, y) else { continue };
            if d <= 0.0 {
                skipped += 1;
                continue;
            }
            let p = q * Vector4::new(x as f64, y as f64, d as f64, 1.0);
            points.push([p.x / p.w, p.y / p.w, p.z / p.w]);
            pixel_index.push(y * map.width() + x);
            if let Some(img) = colors {
                rgb.push(img.get(x, y));
            }
        }
    }
    let cloud = PointCloud3D {
        points,
        colors: colors.map(|_| rgb),
    };
    if skipped > 0 {
        log::debug!("reprojection skipped {skipped} non-positive disparities");
    }
    Reprojection {
        cloud,
        pixel_index,
        skipped_nonpositive: skipped,
    }
}
