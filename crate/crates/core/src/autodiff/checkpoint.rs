//! Named f32 tensors plus string metadata, stored like volumes: a raw
//! little-endian payload (`.ckpt`) and a `key=value` header (`.ckpth`).
//!
//! Header lines are `meta.<key>=<value>` followed by one
//! `tensor.<name>=d0,d1,...` line per tensor in payload order.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::io_support::{f32s_to_le_bytes, le_bytes_to_f32s, parse_header};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

pub fn checkpoint_header_path(path: &Path) -> PathBuf {
    path.with_extension("ckpth")
}

pub fn checkpoint_payload_path(path: &Path) -> PathBuf {
    path.with_extension("ckpt")
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.tensors.push((name.into(), shape.to_vec(), values));
    }

    pub fn tensor(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, v)| (s.as_slice(), v.as_slice()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut header = String::new();
        for (k, v) in &self.meta {
            if v.contains('\n') || k.contains('=') {
                return Err(Error::InvalidArgument(format!("bad metadata entry {k:?}")));
            }
            header.push_str(&format!("meta.{k}={v}\n"));
        }
        let mut payload = Vec::new();
        for (name, shape, values) in &self.tensors {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            header.push_str(&format!("tensor.{name}={}\n", dims.join(",")));
            payload.extend_from_slice(&f32s_to_le_bytes(values));
        }
        let (hp, pp) = (checkpoint_header_path(path), checkpoint_payload_path(path));
        if let Some(parent) = pp.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&pp, payload).map_err(|e| Error::io(&pp, e))?;
        fs::write(&hp, header).map_err(|e| Error::io(&hp, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let (hp, pp) = (checkpoint_header_path(path), checkpoint_payload_path(path));
        let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
        let bytes = fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::header(&pp, "payload is not a whole number of f32 values"));
        }
        let values = le_bytes_to_f32s(&bytes);
        let mut ckpt = Checkpoint::default();
        let mut offset = 0;
        for (k, v) in parse_header(&hp, &text)? {
            if let Some(key) = k.strip_prefix("meta.") {
                ckpt.meta.push((key.to_string(), v));
            } else if let Some(name) = k.strip_prefix("tensor.") {
                let shape = v
                    .split(',')
                    .map(|d| d.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::header(&hp, format!("bad shape for tensor {name}")))?;
                let n: usize = shape.iter().product();
                if offset + n > values.len() {
                    return Err(Error::PayloadLength {
                        expected: offset + n,
                        found: values.len(),
                    });
                }
                ckpt.tensors
                    .push((name.to_string(), shape, values[offset..offset + n].to_vec()));
                offset += n;
            } else {
                return Err(Error::header(&hp, format!("unknown key {k:?}")));
            }
        }
        if offset != values.len() {
            return Err(Error::PayloadLength {
                expected: offset,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ckpt)
    }
}
