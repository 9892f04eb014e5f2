use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{read_bytes, write_atomic, IoError, Result};

/// Marker written into invalid depth / disparity pixels.
pub const INVALID_DEPTH: f32 = -1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapUnit {
    Mm,
    Slope,
    Radians,
    DisparityPx,
}

impl MapUnit {
    fn tag(self) -> &'static str {
        match self {
            MapUnit::Mm => "mm",
            MapUnit::Slope => "slope",
            MapUnit::Radians => "rad",
            MapUnit::DisparityPx => "disparity_px",
        }
    }
}

impl fmt::Display for MapUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for MapUnit {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mm" => MapUnit::Mm,
            "slope" => MapUnit::Slope,
            "rad" => MapUnit::Radians,
            "disparity_px" => MapUnit::DisparityPx,
            other => {
                return Err(IoError::MalformedHeader(format!(
                    "unknown unit tag {other:?}"
                )))
            }
        })
    }
}

/// Row-major scalar map with a unit tag and an optional invalid-pixel sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
    unit: MapUnit,
    sentinel: Option<f32>,
}

impl FloatMap {
    pub fn zeros(width: usize, height: usize, unit: MapUnit) -> Self {
        assert!(width >= 1 && height >= 1, "map must be at least 1x1");
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            unit,
            sentinel: None,
        }
    }

    pub fn from_values(
        width: usize,
        height: usize,
        values: Vec<f32>,
        unit: MapUnit,
    ) -> Result<Self> {
        Self::build(width, height, values, unit, None)
    }

    /// A map whose invalid pixels hold `sentinel`.
    pub fn with_sentinel(
        width: usize,
        height: usize,
        values: Vec<f32>,
        unit: MapUnit,
        sentinel: f32,
    ) -> Result<Self> {
        Self::build(width, height, values, unit, Some(sentinel))
    }

    fn build(
        width: usize,
        height: usize,
        values: Vec<f32>,
        unit: MapUnit,
        sentinel: Option<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(IoError::SizeMismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(IoError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            values,
            unit,
            sentinel,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn unit(&self) -> MapUnit {
        self.unit
    }

    pub fn sentinel(&self) -> Option<f32> {
        self.sentinel
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Mutable access; callers must keep values finite.
    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_valid_value(&self, v: f32) -> bool {
        v.is_finite() && self.sentinel != Some(v)
    }

    /// `Some(value)` unless the pixel carries the sentinel.
    #[inline]
    pub fn valid(&self, x: usize, y: usize) -> Option<f32> {
        let v = self.get(x, y);
        self.is_valid_value(v).then_some(v)
    }

    pub fn valid_count(&self) -> usize {
        self.values
            .iter()
            .filter(|&&v| self.is_valid_value(v))
            .count()
    }

    pub fn same_size(&self, other: &FloatMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

pub fn encode_floatmap(map: &FloatMap) -> Result<Vec<u8>> {
    if let Some(i) = map.values.iter().position(|v| !v.is_finite()) {
        return Err(IoError::NonFinite(i));
    }
    let mut header = format!("Pf\n{} {}\n-1.0 # unit={}", map.width, map.height, map.unit);
    if let Some(s) = map.sentinel {
        header.push_str(&format!(" sentinel={s:e}"));
    }
    header.push('\n');
    let mut out = Vec::with_capacity(header.len() + 4 * map.values.len());
    out.extend_from_slice(header.as_bytes());
    // PFM stores rows bottom-to-top.
    for row in map.values.chunks_exact(map.width).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn next_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let start = *pos;
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|i| start + i)
        .ok_or_else(|| IoError::MalformedHeader("header line not terminated".into()))?;
    *pos = end + 1;
    std::str::from_utf8(&bytes[start..end])
        .map_err(|_| IoError::MalformedHeader("non-ASCII header".into()))
}

pub fn decode_floatmap(bytes: &[u8]) -> Result<FloatMap> {
    if bytes.len() < 2 {
        return Err(IoError::MalformedHeader(
            "file shorter than the magic number".into(),
        ));
    }
    match &bytes[..2] {
        b"Pf" => {}
        b"PF" => return Err(IoError::UnsupportedMagic("PF (colour PFM)".into())),
        other => {
            return Err(IoError::UnsupportedMagic(
                String::from_utf8_lossy(other).into_owned(),
            ))
        }
    }
    let mut pos = 0;
    let magic = next_line(bytes, &mut pos)?;
    if magic.trim() != "Pf" {
        return Err(IoError::MalformedHeader(format!(
            "bad magic line {magic:?}"
        )));
    }
    let dims = next_line(bytes, &mut pos)?;
    let mut it = dims.split_whitespace().map(|t| t.parse::<usize>());
    let (width, height) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) if w > 0 && h > 0 => (w, h),
        _ => return Err(IoError::MalformedHeader(format!("bad dimensions {dims:?}"))),
    };
    let scale_line = next_line(bytes, &mut pos)?;
    let (scale_part, comment) = match scale_line.split_once('#') {
        Some((s, c)) => (s, c),
        None => (scale_line, ""),
    };
    let scale: f32 = scale_part
        .trim()
        .parse()
        .map_err(|_| IoError::MalformedHeader(format!("bad scale {scale_part:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(IoError::MalformedHeader("scale must be non-zero".into()));
    }
    let little_endian = scale < 0.0;

    let mut unit = None;
    let mut sentinel = None;
    for tag in comment.split_whitespace() {
        match tag.split_once('=') {
            Some(("unit", u)) => unit = Some(u.parse::<MapUnit>()?),
            Some(("sentinel", s)) => {
                let s: f32 = s
                    .parse()
                    .map_err(|_| IoError::MalformedHeader(format!("bad sentinel {s:?}")))?;
                sentinel = Some(s);
            }
            _ => {}
        }
    }
    let unit = unit.ok_or_else(|| IoError::MalformedHeader("missing unit tag".into()))?;

    let expected = width * height * 4;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        if payload.len() < expected {
            return Err(IoError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        return Err(IoError::SizeMismatch(format!(
            "payload holds {} bytes, header declares {expected}",
            payload.len()
        )));
    }
    let mut values = vec![0f32; width * height];
    for (r, row) in payload.chunks_exact(width * 4).enumerate() {
        let y = height - 1 - r;
        for (x, b) in row.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            values[y * width + x] = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    FloatMap::build(width, height, values, unit, sentinel)
}

pub fn read_floatmap(path: &Path) -> Result<FloatMap> {
    decode_floatmap(&read_bytes(path)?)
}

pub fn write_floatmap(map: &FloatMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_floatmap(map)?)
}
