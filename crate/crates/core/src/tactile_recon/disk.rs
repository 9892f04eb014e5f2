use super::{Result, TactileError};
use crate::imaging_io::FloatMap;

/// Fraction of the disk radius averaged over, keeping clear of the rim.
pub const PLATEAU_FRACTION: f64 = 0.8;

/// Mean depth (mm) over the disk's flat face: pixels within 80 % of its
/// radius that fall on the map.
pub fn measure_disk_depth(
    depth: &FloatMap,
    center_px: [f64; 2],
    diameter_mm: f64,
    px_per_mm: f64,
) -> Result<f64> {
    if !(diameter_mm > 0.0) || !(px_per_mm > 0.0) {
        return Err(TactileError::InvalidInput(
            "disk diameter and pixel scale must be positive".into(),
        ));
    }
    let r = PLATEAU_FRACTION * 0.5 * diameter_mm * px_per_mm;
    let [cx, cy] = center_px;
    let x0 = (cx - r).floor().max(0.0) as usize;
    let y0 = (cy - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil().min(depth.width() as f64 - 1.0)).max(-1.0);
    let y1 = ((cy + r).ceil().min(depth.height() as f64 - 1.0)).max(-1.0);
    let (mut sum, mut count) = (0.0, 0usize);
    if x1 >= 0.0 && y1 >= 0.0 {
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r * r {
                    if let Some(v) = depth.valid(x, y) {
                        sum += v as f64;
                        count += 1;
                    }
                }
            }
        }
    }
    if count == 0 {
        return Err(TactileError::RegionEmpty);
    }
    Ok(sum / count as f64)
}
