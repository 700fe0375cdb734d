//! Named-tensor container used for checkpoints.
//!
//! Layout (little-endian): `"QDCK"`, u32 version, u64 manifest length, the
//! UTF-8 JSON manifest, then every tensor's f64 values back to back. The
//! manifest lists each tensor's name, shape and byte offset from the start
//! of the data section, plus free-form metadata.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Parameters;
use crate::diffcore::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"QDCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    meta: Value,
    tensors: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorArchive {
    pub meta: Value,
    pub tensors: Vec<(String, Tensor)>,
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        reason: reason.into(),
    }
}

impl TensorArchive {
    pub fn new(meta: Value) -> Self {
        TensorArchive {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn push_params(&mut self, prefix: &str, params: &impl Parameters) {
        for (name, t) in params.named_tensors() {
            self.push(format!("{prefix}/{name}"), t.clone());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Overwrite `params` in place from tensors stored under `prefix`.
    pub fn restore_params(&self, prefix: &str, params: &mut impl Parameters) -> Result<()> {
        let index: HashMap<&str, &Tensor> =
            self.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let names = params.tensor_names();
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let key = format!("{prefix}/{name}");
            let t = index
                .get(key.as_str())
                .ok_or_else(|| Error::contract(format!("checkpoint lacks tensor {key}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::contract(format!(
                    "tensor {key}: stored shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = (*t).clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let entries = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = Entry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                    dtype: "f64".into(),
                };
                offset += 8 * t.len() as u64;
                e
            })
            .collect();
        let manifest = serde_json::to_vec(&Manifest {
            meta: self.meta.clone(),
            tensors: entries,
        })
        .map_err(|e| Error::contract(format!("manifest serialization: {e}")))?;
        let mut out = Vec::with_capacity(16 + manifest.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(format_err(0, "bad magic, expected QDCK"));
        }
        if bytes.len() < 16 {
            return Err(format_err(bytes.len(), "truncated header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let data_start = 16usize
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| format_err(8, "manifest length exceeds file"))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..data_start])
            .map_err(|e| format_err(16, format!("manifest: {e}")))?;
        let data = &bytes[data_start..];
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        let mut expected = 0u64;
        for e in manifest.tensors {
            if e.dtype != "f64" {
                return Err(format_err(16, format!("tensor {}: dtype {}", e.name, e.dtype)));
            }
            if e.offset != expected {
                return Err(format_err(data_start + e.offset as usize, "non-contiguous tensor offset"));
            }
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start + 8 * n;
            if end > data.len() {
                return Err(format_err(data_start + data.len(), format!("tensor {} truncated", e.name)));
            }
            let values = data[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((e.name, Tensor::new(e.shape, values)?));
            expected = end as u64;
        }
        if expected as usize != data.len() {
            return Err(format_err(data_start + expected as usize, "trailing bytes"));
        }
        Ok(TensorArchive {
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TensorArchive::from_bytes(&std::fs::read(path)?)
    }
}
