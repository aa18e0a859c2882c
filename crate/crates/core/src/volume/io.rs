//! Raw little-endian f32 payload (`.vol`) with a `key=value` text header
//! (`.volh`).

use std::fs;
use std::path::{Path, PathBuf};

use super::Volume3D;
use crate::error::{Error, Result};

pub fn payload_path(path: &Path) -> PathBuf {
    path.with_extension("vol")
}

pub fn header_path(path: &Path) -> PathBuf {
    path.with_extension("volh")
}

pub(crate) fn parse_header(path: &Path, text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::header(path, format!("expected key=value, got {line:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_triple<T: std::str::FromStr>(path: &Path, key: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::header(path, format!("{key} needs 3 comma-separated values")));
    }
    let mut parsed = Vec::with_capacity(3);
    for p in parts {
        parsed.push(
            p.parse::<T>()
                .map_err(|_| Error::header(path, format!("bad {key} component {p:?}")))?,
        );
    }
    let mut it = parsed.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

pub(crate) fn f32s_to_le_bytes(values: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub(crate) fn le_bytes_to_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Reads `<name>.volh` and `<name>.vol`. `path` may name either file or the
/// bare stem.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let hpath = header_path(path);
    let ppath = payload_path(path);
    let text = fs::read_to_string(&hpath).map_err(|e| Error::io(&hpath, e))?;

    let mut dims = None;
    let mut spacing = None;
    for (k, v) in parse_header(&hpath, &text)? {
        match k.as_str() {
            "dims" => dims = Some(parse_triple::<usize>(&hpath, "dims", &v)?),
            "spacing" => spacing = Some(parse_triple::<f64>(&hpath, "spacing", &v)?),
            "dtype" if v != "f32le" => {
                return Err(Error::header(&hpath, format!("unsupported dtype {v:?}")))
            }
            "order" if v != "x-fastest" => {
                return Err(Error::header(&hpath, format!("unsupported order {v:?}")))
            }
            _ => {}
        }
    }
    let dims = dims.ok_or_else(|| Error::header(&hpath, "missing dims"))?;
    let spacing = spacing.ok_or_else(|| Error::header(&hpath, "missing spacing"))?;
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::header(&hpath, "dims must be positive"));
    }

    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let expected = dims[0] * dims[1] * dims[2];
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(Error::PayloadLength {
            expected,
            found: bytes.len() / 4,
        });
    }
    Volume3D::new(dims, spacing, le_bytes_to_f32s(&bytes))
}

pub fn save_volume(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(index) = vol.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let [nx, ny, nz] = vol.dims();
    let [sx, sy, sz] = vol.spacing();
    let header = format!(
        "dims={nx},{ny},{nz}\nspacing={sx},{sy},{sz}\ndtype=f32le\norder=x-fastest\n"
    );
    let hpath = header_path(path);
    let ppath = payload_path(path);
    if let Some(parent) = ppath.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&ppath, f32s_to_le_bytes(vol.values())).map_err(|e| Error::io(&ppath, e))?;
    fs::write(&hpath, header).map_err(|e| Error::io(&hpath, e))?;
    Ok(())
}
