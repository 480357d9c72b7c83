//! Cube and mask files.
//!
//! Each object is a raw payload file plus a TOML sidecar header stored next to
//! it as `<payload>.toml`:
//!
//! * cubes: little-endian `f32`, row-major `(y, x, channel)`;
//! * masks: one `u8` per pixel, row-major, `255` marks unannotated pixels.
//!
//! Headers carry an integer `format_version`; readers reject anything else.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cube::{HsiCube, LabelMap, SegmentationMask, INVALID_LABEL};
use crate::error::{Error, Result};
use crate::manifest::json_error;

pub const CUBE_FORMAT_VERSION: u32 = 1;
pub const MASK_FORMAT_VERSION: u32 = 1;

const CUBE_DTYPE: &str = "f32le";
const MASK_DTYPE: &str = "u8";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CubeHeader {
    format_version: u32,
    kind: String,
    dtype: String,
    height: usize,
    width: usize,
    channels: usize,
    wavelengths: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskHeader {
    format_version: u32,
    kind: String,
    dtype: String,
    height: usize,
    width: usize,
    invalid_label: u8,
}

/// Path of the sidecar header belonging to a payload file.
pub fn header_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

fn read_header<T: for<'de> Deserialize<'de>>(path: &Path, kind: &str, supported: u32) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| toml_error(path, e))?;
    let version = match table.get("format_version") {
        Some(toml::Value::Integer(v)) => *v,
        Some(_) => {
            return Err(Error::parse(
                path,
                field_offset(&text, "format_version"),
                "format_version must be an integer",
            ))
        }
        None => return Err(Error::parse(path, 0, "missing format_version")),
    };
    if version != supported as i64 {
        return Err(Error::UnknownVersion {
            path: path.to_path_buf(),
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported,
        });
    }
    match table.get("kind") {
        Some(toml::Value::String(k)) if k == kind => {}
        _ => {
            return Err(Error::parse(
                path,
                field_offset(&text, "kind"),
                format!("expected kind = \"{kind}\""),
            ))
        }
    }
    toml::from_str(&text).map_err(|e| toml_error(path, e))
}

pub(crate) fn toml_error(path: &Path, e: toml::de::Error) -> Error {
    let offset = e.span().map(|s| s.start).unwrap_or(0);
    Error::parse(path, offset, e.message().to_string())
}

fn field_offset(text: &str, key: &str) -> usize {
    text.find(key).unwrap_or(0)
}

fn write_header<T: Serialize>(path: &Path, header: &T) -> Result<()> {
    let text = toml::to_string(header).map_err(|e| Error::Config(format!("cannot serialize header: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_payload(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            bytes.len().min(expected),
            format!("payload has {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    Ok(bytes)
}

pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = CubeHeader {
        format_version: CUBE_FORMAT_VERSION,
        kind: "cube".into(),
        dtype: CUBE_DTYPE.into(),
        height: cube.height(),
        width: cube.width(),
        channels: cube.channels(),
        wavelengths: cube.wavelengths().to_vec(),
    };
    let mut bytes = Vec::with_capacity(cube.data().len() * 4);
    for v in cube.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_header(&header_path(path), &header)
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    let path = path.as_ref();
    let hpath = header_path(path);
    let header: CubeHeader = read_header(&hpath, "cube", CUBE_FORMAT_VERSION)?;
    if header.dtype != CUBE_DTYPE {
        return Err(Error::parse(&hpath, 0, format!("unsupported dtype '{}'", header.dtype)));
    }
    if header.wavelengths.len() != header.channels {
        return Err(Error::parse(
            &hpath,
            0,
            format!(
                "header lists {} wavelengths for {} channels",
                header.wavelengths.len(),
                header.channels
            ),
        ));
    }
    let n = header.height * header.width * header.channels;
    let bytes = read_payload(path, n * 4)?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    HsiCube::new(header.height, header.width, header.wavelengths, data)
        .map_err(|e| Error::parse(&hpath, 0, e.to_string()))
}

pub fn save_mask(mask: &SegmentationMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = MaskHeader {
        format_version: MASK_FORMAT_VERSION,
        kind: "mask".into(),
        dtype: MASK_DTYPE.into(),
        height: mask.height(),
        width: mask.width(),
        invalid_label: INVALID_LABEL,
    };
    fs::write(path, mask.labels()).map_err(|e| Error::io(path, e))?;
    write_header(&header_path(path), &header)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<SegmentationMask> {
    let path = path.as_ref();
    let hpath = header_path(path);
    let header: MaskHeader = read_header(&hpath, "mask", MASK_FORMAT_VERSION)?;
    if header.dtype != MASK_DTYPE || header.invalid_label != INVALID_LABEL {
        return Err(Error::parse(
            &hpath,
            0,
            format!(
                "unsupported mask encoding dtype='{}' invalid_label={}",
                header.dtype, header.invalid_label
            ),
        ));
    }
    let bytes = read_payload(path, header.height * header.width)?;
    SegmentationMask::new(header.height, header.width, bytes)
}

/// Reads a label map document; `.json` files are parsed as JSON, anything else as TOML.
pub fn load_labelmap(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| json_error(&text, path, e))
    } else {
        toml::from_str(&text).map_err(|e| toml_error(path, e))
    }
}

pub fn save_labelmap(labelmap: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = toml::to_string(labelmap).map_err(|e| Error::Config(format!("cannot serialize label map: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
