use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_bytes, write_atomic, IoError, Result};

/// 3D points in millimetres, camera frame (Z along the optical axis).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud3D {
    pub points: Vec<[f64; 3]>,
    /// Optional per-point colour; when present its length equals `points.len()`.
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud3D {
    pub fn from_points(points: Vec<[f64; 3]>) -> Self {
        Self {
            points,
            colors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps the points whose index satisfies `keep`, colours included.
    pub fn retain_indices(&self, keep: &[bool]) -> PointCloud3D {
        let points = self
            .points
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(p, _)| *p)
            .collect();
        let colors = self.colors.as_ref().map(|c| {
            c.iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(c, _)| *c)
                .collect()
        });
        PointCloud3D { points, colors }
    }

    pub fn median_z(&self) -> Option<f64> {
        let mut z: Vec<f64> = self.points.iter().map(|p| p[2]).collect();
        crate::depth_eval::median_in_place(&mut z)
    }
}

pub fn encode_pointcloud(cloud: &PointCloud3D) -> Result<String> {
    if cloud.is_empty() {
        return Err(IoError::NothingToWrite);
    }
    if let Some(c) = &cloud.colors {
        if c.len() != cloud.points.len() {
            return Err(IoError::SizeMismatch(format!(
                "{} colours for {} points",
                c.len(),
                cloud.points.len()
            )));
        }
    }
    if cloud.points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(IoError::NonFinite(0));
    }
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    writeln!(s, "element vertex {}", cloud.points.len()).unwrap();
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        write!(s, "{} {} {}", p[0], p[1], p[2]).unwrap();
        if let Some(c) = &cloud.colors {
            let c = c[i];
            write!(s, " {} {} {}", c[0], c[1], c[2]).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

/// Parses the ASCII PLY subset produced by [`encode_pointcloud`].
pub fn decode_pointcloud(text: &str) -> Result<PointCloud3D> {
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(IoError::UnsupportedMagic("expected \"ply\"".into()));
    }
    let mut count = None;
    let mut props = Vec::new();
    loop {
        let line = lines
            .next()
            .ok_or_else(|| IoError::MalformedHeader("missing end_header".into()))?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("format") if it.next() != Some("ascii") => {
                return Err(IoError::MalformedHeader(
                    "only ascii PLY is supported".into(),
                ))
            }
            Some("element") => {
                if it.next() == Some("vertex") {
                    count = it.next().and_then(|n| n.parse::<usize>().ok());
                }
            }
            Some("property") => props.push(it.last().unwrap_or_default().to_string()),
            Some("end_header") => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| IoError::MalformedHeader("missing vertex count".into()))?;
    let has_color = props.iter().any(|p| p == "red");
    let mut points = Vec::with_capacity(count);
    let mut colors = has_color.then(Vec::new);
    for i in 0..count {
        let line = lines.next().ok_or(IoError::Truncated {
            expected: count,
            found: i,
        })?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let need = if has_color { 6 } else { 3 };
        if f.len() < need {
            return Err(IoError::MalformedHeader(format!(
                "vertex {i} has {} fields",
                f.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| IoError::MalformedHeader(format!("bad number {s:?}")))
        };
        points.push([num(f[0])?, num(f[1])?, num(f[2])?]);
        if let Some(c) = colors.as_mut() {
            let byte = |s: &str| {
                s.parse::<u8>()
                    .map_err(|_| IoError::MalformedHeader(format!("bad colour {s:?}")))
            };
            c.push([byte(f[3])?, byte(f[4])?, byte(f[5])?]);
        }
    }
    Ok(PointCloud3D { points, colors })
}

pub fn read_pointcloud(path: &Path) -> Result<PointCloud3D> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| IoError::MalformedHeader("PLY is not ASCII".into()))?;
    decode_pointcloud(&text)
}

pub fn write_pointcloud(cloud: &PointCloud3D, path: &Path) -> Result<()> {
    write_atomic(path, encode_pointcloud(cloud)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        let s = encode_pointcloud(&PointCloud3D::from_points(vec![[0.0, 0.0, 100.0]])).unwrap();
        assert!(s.contains("element vertex 1\n"));
        assert!(s.ends_with("0 0 100\n"));
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let err = encode_pointcloud(&PointCloud3D::default()).unwrap_err();
        assert_eq!(err.to_string(), "nothing to write");
    }

    #[test]
    fn axis_triad_keeps_six_significant_digits() {
        let pts = vec![
            [12.345678, 0.0, 100.0],
            [0.0, -98.76543, 100.0],
            [0.0, 0.0, 123.45678],
        ];
        let cloud = PointCloud3D::from_points(pts.clone());
        let back = decode_pointcloud(&encode_pointcloud(&cloud).unwrap()).unwrap();
        for (a, b) in pts.iter().flatten().zip(back.points.iter().flatten()) {
            let scale = a.abs().max(1e-12);
            assert!((a - b).abs() / scale < 5e-7 || (a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn colours_round_trip() {
        let cloud = PointCloud3D {
            points: vec![[1.0, 2.0, 3.0]],
            colors: Some(vec![[9, 8, 7]]),
        };
        assert_eq!(
            decode_pointcloud(&encode_pointcloud(&cloud).unwrap()).unwrap(),
            cloud
        );
    }
}
