//! Readers and writers for every file format the pipeline exchanges.
//!
//! | data            | format                                   |
//! |-----------------|------------------------------------------|
//! | RGB frames      | binary PPM (`P6`, maxval 255)            |
//! | scalar maps     | grayscale little-endian PFM (`Pf`)       |
//! | point clouds    | ASCII PLY                                |
//! | report tables   | CSV or JSON                              |
//!
//! Every writer goes through [`write_atomic`], so a crashed run never leaves
//! a half-written artifact behind.

mod pfm;
mod ply;
mod ppm;
mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use pfm::{
    decode_floatmap, encode_floatmap, read_floatmap, write_floatmap, FloatMap, MapUnit,
    INVALID_DEPTH,
};
pub use ply::{
    decode_pointcloud, encode_pointcloud, read_pointcloud, write_pointcloud, PointCloud3D,
};
pub use ppm::{decode_image, encode_image, read_image, write_image, ImageRGB8};
pub use report::{write_report, CellUnit, ReportCell, ReportFormat, ReportTable};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("unsupported magic {0:?}")]
    UnsupportedMagic(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("non-finite value at index {0} and no sentinel declared")]
    NonFinite(usize),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("nothing to write")]
    NothingToWrite,
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, IoError>;

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_err = |source| IoError::File {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(file_err)?;
        f.write_all(bytes).map_err(file_err)?;
        f.sync_all().map_err(file_err)?;
    }
    fs::rename(&tmp, path).map_err(file_err)
}

/// Splits whitespace-separated header tokens, skipping `#` comments, and
/// returns the tokens together with the offset just past the last one.
///
/// Exactly one whitespace byte separates the final token from the payload.
pub(crate) fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        if i >= bytes.len() {
            return Err(IoError::MalformedHeader(format!(
                "expected {count} header fields, found {}",
                tokens.len()
            )));
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let tok = std::str::from_utf8(&bytes[start..i])
            .map_err(|_| IoError::MalformedHeader("non-ASCII header".into()))?;
        tokens.push(tok.to_string());
    }
    if i >= bytes.len() {
        return Err(IoError::MalformedHeader(
            "missing separator before payload".into(),
        ));
    }
    Ok((tokens, i + 1))
}
