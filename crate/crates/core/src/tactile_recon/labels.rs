use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hsv::{contact_mask, HsvFilterSpec};
use super::{Result, TactileError};
use crate::imaging_io::{read_bytes, write_atomic};
use crate::membrane_sim::TactileFramePair;

/// One labelled pixel: `features = [rb_dx, rb_dy, x, y]`, `labels = [d_x, d_y]`
/// in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub features: [f64; 4],
    pub labels: [f64; 2],
}

/// Network inputs at one pixel: the background-subtracted red-minus-blue
/// response of each step (scaled to `[-1, 1]`) and the normalised position.
pub fn pixel_features(
    pair: &TactileFramePair,
    reference: &TactileFramePair,
    x: usize,
    y: usize,
) -> [f64; 4] {
    let rb = |frame: &crate::imaging_io::ImageRGB8, reference: &crate::imaging_io::ImageRGB8| {
        let (p, r) = (frame.get(x, y), reference.get(x, y));
        ((p[0] as f64 - r[0] as f64) - (p[2] as f64 - r[2] as f64)) / 255.0
    };
    let (w, h) = (pair.width(), pair.height());
    [
        rb(&pair.frame_dx, &reference.frame_dx),
        rb(&pair.frame_dy, &reference.frame_dy),
        x as f64 / (w.max(2) - 1) as f64,
        y as f64 / (h.max(2) - 1) as f64,
    ]
}

/// Surface angles of a pressed sphere: `d = asin(offset / r)` per axis, or
/// `None` at or beyond the rim.
pub fn ball_label(px: f64, py: f64, center: [f64; 2], radius: f64) -> Option<[f64; 2]> {
    let (ox, oy) = (px - center[0], py - center[1]);
    if (ox * ox + oy * oy).sqrt() >= radius {
        return None;
    }
    Some([(ox / radius).asin(), (oy / radius).asin()])
}

/// Labels every contact pixel of a ball press.
///
/// Contact pixels pass the HSV filter and lie strictly within `radius` of
/// `center`; `limit` narrows that further (e.g. to the contact footprint).
pub fn gen_ball_labels(
    pair: &TactileFramePair,
    reference: &TactileFramePair,
    center: [f64; 2],
    radius: f64,
    limit: Option<f64>,
    spec: &HsvFilterSpec,
) -> Result<Vec<CalibrationSample>> {
    if !(radius > 0.0) {
        return Err(TactileError::InvalidInput(format!(
            "ball radius {radius} must be positive"
        )));
    }
    if !pair.frame_dx.same_size(&reference.frame_dx) {
        return Err(TactileError::SizeMismatch(
            "frames and reference differ in size".into(),
        ));
    }
    let mask = contact_mask(pair, reference, spec);
    let reach = limit.map_or(radius, |l| l.min(radius));
    let mut samples = Vec::new();
    for y in 0..pair.height() {
        for x in 0..pair.width() {
            if !mask.get(x, y) {
                continue;
            }
            let (ox, oy) = (x as f64 - center[0], y as f64 - center[1]);
            if (ox * ox + oy * oy).sqrt() >= reach {
                continue;
            }
            if let Some(labels) = ball_label(x as f64, y as f64, center, radius) {
                samples.push(CalibrationSample {
                    features: pixel_features(pair, reference, x, y),
                    labels,
                });
            }
        }
    }
    if samples.is_empty() {
        return Err(TactileError::EmptyCalibrationFrame);
    }
    Ok(samples)
}

pub const DATASET_HEADER: &str = "rb_dx,rb_dy,x,y,dx,dy";

pub fn encode_dataset(samples: &[CalibrationSample]) -> String {
    let mut out = String::from(DATASET_HEADER);
    out.push('\n');
    for s in samples {
        let [a, b, c, d] = s.features;
        let [e, f] = s.labels;
        let _ = writeln!(out, "{a},{b},{c},{d},{e},{f}");
    }
    out
}

pub fn decode_dataset(text: &str) -> Result<Vec<CalibrationSample>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == DATASET_HEADER => {}
        _ => {
            return Err(TactileError::MalformedDataset {
                line: 1,
                message: format!("expected header {DATASET_HEADER:?}"),
            })
        }
    }
    let mut samples = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| TactileError::MalformedDataset {
            line: i + 1,
            message,
        };
        let values: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("{f:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != 6 {
            return Err(bad(format!("{} fields, expected 6", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        if values[4].abs() >= std::f64::consts::FRAC_PI_2
            || values[5].abs() >= std::f64::consts::FRAC_PI_2
        {
            return Err(bad("angle label outside (-π/2, π/2)".into()));
        }
        samples.push(CalibrationSample {
            features: [values[0], values[1], values[2], values[3]],
            labels: [values[4], values[5]],
        });
    }
    Ok(samples)
}

pub fn write_dataset(samples: &[CalibrationSample], path: &Path) -> Result<()> {
    Ok(write_atomic(path, encode_dataset(samples).as_bytes())?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<CalibrationSample>> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| TactileError::MalformedDataset {
        line: 0,
        message: "not UTF-8".into(),
    })?;
    decode_dataset(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_values() {
        assert_eq!(ball_label(10.0, 5.0, [10.0, 5.0], 4.0), Some([0.0, 0.0]));
        let [dx, _] = ball_label(12.0, 5.0, [10.0, 5.0], 4.0).unwrap();
        assert!((dx - std::f64::consts::FRAC_PI_6).abs() < 1e-15);
        assert_eq!(ball_label(14.0, 5.0, [10.0, 5.0], 4.0), None);
    }

    #[test]
    fn dataset_round_trip() {
        let s = vec![CalibrationSample {
            features: [0.1, -0.2, 0.5, 1.0],
            labels: [0.3, -1.2],
        }];
        assert_eq!(decode_dataset(&encode_dataset(&s)).unwrap(), s);
    }

    #[test]
    fn corrupt_dataset_reports_line() {
        let text = format!("{DATASET_HEADER}\n0,0,0,0,0,0\n0,0,x,0,0,0\n");
        match decode_dataset(&text) {
            Err(TactileError::MalformedDataset { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(decode_dataset("a,b\n").is_err());
    }
}
