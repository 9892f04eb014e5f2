use nalgebra::Vector3;

use super::{PinholeCamera, Result, StereoError, StereoRig};
use crate::imaging_io::ImageRGB8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Per-pixel source coordinates in the original images for every pixel of
/// the rectified images.
#[derive(Debug, Clone, PartialEq)]
pub struct RectifyMaps {
    pub width: usize,
    pub height: usize,
    pub left: Vec<[f32; 2]>,
    pub right: Vec<[f32; 2]>,
}

impl StereoRig {
    fn side(&self, side: Side) -> (&PinholeCamera, &nalgebra::Matrix3<f64>) {
        match side {
            Side::Left => (&self.left, &self.rectification.r_left),
            Side::Right => (&self.right, &self.rectification.r_right),
        }
    }

    pub fn rectify_maps(&self) -> RectifyMaps {
        let (w, h) = (self.left.width, self.left.height);
        let rect = &self.rectification;
        let build = |side: Side| {
            let (cam, r) = self.side(side);
            let rt = r.transpose();
            (0..w * h)
                .map(|i| {
                    let ray = Vector3::new(
                        ((i % w) as f64 - rect.cx) / rect.f,
                        ((i / w) as f64 - rect.cy) / rect.f,
                        1.0,
                    );
                    match cam.project(&(rt * ray)) {
                        Some([u, v]) => [u as f32, v as f32],
                        None => [f32::NAN, f32::NAN],
                    }
                })
                .collect()
        };
        RectifyMaps {
            width: w,
            height: h,
            left: build(Side::Left),
            right: build(Side::Right),
        }
    }
}

/// Where an original pixel lands in the rectified image of `side`.
pub fn rectify_point(rig: &StereoRig, side: Side, u: f64, v: f64) -> Option<[f64; 2]> {
    let (cam, r) = rig.side(side);
    let p = r * cam.pixel_ray(u, v);
    if p.z <= 0.0 {
        return None;
    }
    let rect = &rig.rectification;
    Some([rect.f * p.x / p.z + rect.cx, rect.f * p.y / p.z + rect.cy])
}

fn remap(img: &ImageRGB8, map: &[[f32; 2]]) -> ImageRGB8 {
    let (w, h) = (img.width(), img.height());
    ImageRGB8::from_fn(w, h, |x, y| {
        let [u, v] = map[y * w + x];
        if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f32 && v <= (h - 1) as f32) {
            return [0, 0, 0];
        }
        let (u, v) = (u as f64, v as f64);
        let (x0, y0) = (u.floor() as usize, v.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let (a, b, c, d) = (
            img.get(x0, y0),
            img.get(x1, y0),
            img.get(x0, y1),
            img.get(x1, y1),
        );
        std::array::from_fn(|ch| {
            let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
            let bot = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
            (top * (1.0 - fy) + bot * fy).round() as u8
        })
    })
}

/// Warps both images so that corresponding points share a row.
pub fn rectify_pair(
    left: &ImageRGB8,
    right: &ImageRGB8,
    rig: &StereoRig,
) -> Result<(ImageRGB8, ImageRGB8)> {
    for (img, cam, name) in [(left, &rig.left, "left"), (right, &rig.right, "right")] {
        if img.width() != cam.width || img.height() != cam.height {
            return Err(StereoError::SizeMismatch(format!(
                "{name} image is {}x{}, calibration expects {}x{}",
                img.width(),
                img.height(),
                cam.width,
                cam.height
            )));
        }
    }
    let maps = rig.rectify_maps();
    Ok((remap(left, &maps.left), remap(right, &maps.right)))
}
