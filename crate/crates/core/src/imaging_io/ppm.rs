use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{header_tokens, read_bytes, write_atomic, IoError, Result};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRGB8 {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ImageRGB8 {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        Self {
            width,
            height,
            pixels: vec![[0; 3]; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.pixels[y * width + x] = f(x, y);
            }
        }
        img
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(IoError::SizeMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 3]] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        self.pixels[y * self.width + x] = px;
    }

    pub fn same_size(&self, other: &ImageRGB8) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Luma (BT.601 weights) as `f32` in `[0, 255]`.
    pub fn to_gray(&self) -> Vec<f32> {
        self.pixels
            .iter()
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect()
    }
}

pub fn encode_image(img: &ImageRGB8) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len() * 3);
    out.extend_from_slice(header.as_bytes());
    for p in &img.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageRGB8> {
    if bytes.len() < 2 {
        return Err(IoError::MalformedHeader(
            "file shorter than the magic number".into(),
        ));
    }
    if &bytes[..2] != b"P6" {
        return Err(IoError::UnsupportedMagic(
            String::from_utf8_lossy(&bytes[..2]).into_owned(),
        ));
    }
    let (tokens, offset) = header_tokens(bytes, 4)?;
    let parse = |s: &str, what: &str| {
        s.parse::<u32>()
            .map_err(|_| IoError::MalformedHeader(format!("bad {what} {s:?}")))
    };
    let width = parse(&tokens[1], "width")? as usize;
    let height = parse(&tokens[2], "height")? as usize;
    let maxval = parse(&tokens[3], "maxval")?;
    if width == 0 || height == 0 {
        return Err(IoError::MalformedHeader(format!(
            "empty image {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(IoError::UnsupportedMaxval(maxval));
    }
    let expected = width * height * 3;
    let payload = &bytes[offset..];
    if payload.len() < expected {
        return Err(IoError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let pixels = payload[..expected]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok(ImageRGB8 {
        width,
        height,
        pixels,
    })
}

pub fn read_image(path: &Path) -> Result<ImageRGB8> {
    decode_image(&read_bytes(path)?)
}

pub fn write_image(img: &ImageRGB8, path: &Path) -> Result<()> {
    write_atomic(path, &encode_image(img))
}
