//! Grid and mask files.
//!
//! Two formats are understood, chosen by file extension:
//!
//! * `.pgm`: binary portable graymap (`P5`), 2D only, 8- or 16-bit samples.
//!   Grid values are `sample / maxval`. For masks, any non-zero sample is
//!   foreground.
//! * anything else: a raw little-endian payload next to a JSON sidecar with
//!   the same stem and a `.json` extension, e.g. `pred.raw` + `pred.json`:
//!   `{"shape":[h,w], "dtype":"f32", "order":"row-major"}`. Masks use
//!   `"dtype":"u8"` with values in {0, 1}.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BinaryMask, ScalarGrid, Shape};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    shape: Vec<usize>,
    dtype: String,
    #[serde(default = "row_major")]
    order: String,
}

fn row_major() -> String {
    "row-major".to_string()
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<ScalarGrid> {
    let path = path.as_ref();
    if is_pgm(path) {
        let (shape, samples, maxval) = read_pgm(path)?;
        let values = samples.iter().map(|&s| s as f64 / maxval as f64).collect();
        return ScalarGrid::new(shape, values);
    }
    let (shape, payload) = read_raw(path, "f32", 4)?;
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect::<Vec<_>>();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::MalformedPayload {
            path: path.to_path_buf(),
            reason: format!("non-finite value at index {i}"),
        });
    }
    ScalarGrid::new(shape, values)
}

/// Writes `grid`. PGM output is 16-bit with values clamped to [0, 1];
/// raw output stores `f32`.
pub fn save_grid(grid: &ScalarGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_pgm(path) {
        let samples = grid
            .values()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect::<Vec<_>>();
        return write_pgm(path, grid.shape(), &samples, 65535);
    }
    let mut payload = Vec::with_capacity(grid.len() * 4);
    for &v in grid.values() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_raw(path, grid.shape(), "f32", &payload)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    if is_pgm(path) {
        let (shape, samples, _) = read_pgm(path)?;
        return BinaryMask::new(shape, samples.iter().map(|&s| s != 0).collect());
    }
    let (shape, payload) = read_raw(path, "u8", 1)?;
    if let Some(i) = payload.iter().position(|&b| b > 1) {
        return Err(Error::MalformedPayload {
            path: path.to_path_buf(),
            reason: format!("mask value {} at index {i} is not 0 or 1", payload[i]),
        });
    }
    BinaryMask::new(shape, payload.iter().map(|&b| b == 1).collect())
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_pgm(path) {
        let samples = mask
            .bits()
            .iter()
            .map(|&b| if b { 255 } else { 0 })
            .collect::<Vec<u16>>();
        return write_pgm(path, mask.shape(), &samples, 255);
    }
    let payload = mask.bits().iter().map(|&b| b as u8).collect::<Vec<_>>();
    write_raw(path, mask.shape(), "u8", &payload)
}

fn read_raw(path: &Path, dtype: &str, width: usize) -> Result<(Shape, Vec<u8>)> {
    let meta_path = sidecar_path(path);
    if meta_path == path {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "raw payload cannot use the .json extension".into(),
        });
    }
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Sidecar = serde_json::from_str(&text).map_err(|e| Error::MalformedHeader {
        path: meta_path.clone(),
        reason: e.to_string(),
    })?;
    if meta.order != "row-major" {
        return Err(Error::MalformedHeader {
            path: meta_path,
            reason: format!("unsupported order {:?}", meta.order),
        });
    }
    if meta.dtype != dtype {
        return Err(Error::DtypeMismatch {
            path: meta_path,
            expected: dtype.to_string(),
            found: meta.dtype,
        });
    }
    let shape = Shape::new(meta.shape).map_err(|e| Error::MalformedHeader {
        path: meta_path.clone(),
        reason: e.to_string(),
    })?;
    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = shape.len() * width;
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    Ok((shape, payload))
}

fn write_raw(path: &Path, shape: &Shape, dtype: &str, payload: &[u8]) -> Result<()> {
    let meta = Sidecar {
        shape: shape.dims().to_vec(),
        dtype: dtype.to_string(),
        order: row_major(),
    };
    let meta_path = sidecar_path(path);
    if meta_path == path {
        return Err(Error::param("raw payload cannot use the .json extension"));
    }
    fs::write(path, payload).map_err(|e| Error::io(path, e))?;
    fs::write(&meta_path, serde_json::to_string(&meta)?).map_err(|e| Error::io(&meta_path, e))
}

fn read_pgm(path: &Path) -> Result<(Shape, Vec<u16>, u16)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 magic number"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected width, height and maxval"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("numeric header field out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("header must end with a single whitespace byte"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must lie in 1..=65535"));
    }
    let shape = Shape::new(vec![height, width]).map_err(|e| bad(&e.to_string()))?;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let expected = shape.len() * sample_bytes;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(Error::PayloadSize {
            path: path.to_path_buf(),
            expected,
            found: data.len(),
        });
    }
    let samples: Vec<u16> = if sample_bytes == 1 {
        data[..expected].iter().map(|&b| b as u16).collect()
    } else {
        data[..expected]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    };
    if samples.iter().any(|&s| s as usize > maxval) {
        return Err(Error::MalformedPayload {
            path: path.to_path_buf(),
            reason: "sample exceeds maxval".into(),
        });
    }
    Ok((shape, samples, maxval as u16))
}

fn write_pgm(path: &Path, shape: &Shape, samples: &[u16], maxval: u16) -> Result<()> {
    if shape.ndim() != 2 {
        return Err(Error::param("PGM files hold 2D grids only"));
    }
    let (h, w) = (shape.dims()[0], shape.dims()[1]);
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    if maxval < 256 {
        out.extend(samples.iter().map(|&s| s as u8));
    } else {
        for s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
