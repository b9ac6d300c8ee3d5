//! Self-describing tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "I2GFPARC"
//! version  u32       1
//! hlen     u64       length of the JSON header
//! header   hlen      {"config": ModelConfig, "metadata": any, "tensors": [{name, shape, offset}]}
//! payload            f32 values of every tensor, in header order
//! ```
//!
//! Offsets count f32 elements from the start of the payload. Tensors are
//! written in name order, so identical contents always serialise to
//! identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{Architecture, NetworkParams, ParamTensor};
use super::config::ModelConfig;
use crate::error::{MattingError, Result};

pub const MAGIC: &[u8; 8] = b"I2GFPARC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub config: ModelConfig,
    pub metadata: serde_json::Value,
    pub tensors: BTreeMap<String, ParamTensor>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

fn bad(msg: impl Into<String>) -> MattingError {
    MattingError::Archive(msg.into())
}

impl Archive {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset,
            });
            offset += t.data.len();
        }
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            metadata: self.metadata.clone(),
            tensors: entries,
        })
        .map_err(|e| bad(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + header.len() + 4 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing archive magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported archive version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_end = 20usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..header_end]).map_err(|e| bad(e.to_string()))?;
        let payload = &bytes[header_end..];
        if !payload.len().is_multiple_of(4) {
            return Err(bad("payload is not a whole number of f32 values"));
        }
        let total = payload.len() / 4;
        let mut tensors = BTreeMap::new();
        let mut expected_offset = 0;
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if e.offset != expected_offset || e.offset + n > total {
                return Err(bad(format!("tensor {} has an inconsistent offset", e.name)));
            }
            let data = payload[4 * e.offset..4 * (e.offset + n)]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            expected_offset += n;
            if tensors
                .insert(e.name.clone(), ParamTensor { shape: e.shape, data })
                .is_some()
            {
                return Err(bad(format!("duplicate tensor {}", e.name)));
            }
        }
        if expected_offset != total {
            return Err(bad("trailing payload bytes"));
        }
        Ok(Archive {
            config: header.config,
            metadata: header.metadata,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| MattingError::io(parent, e))?;
            }
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| MattingError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| MattingError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl NetworkParams {
    pub fn to_archive(&self, metadata: serde_json::Value) -> Archive {
        Archive {
            config: self.config.clone(),
            metadata,
            tensors: self.tensors.clone(),
        }
    }

    /// Extracts network parameters; tensors whose names contain `/` belong
    /// to other namespaces (e.g. optimizer state) and are ignored.
    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let arch = Architecture::new(&archive.config)?;
        let mut tensors = BTreeMap::new();
        for (path, _) in arch.shape_manifest() {
            let t = archive
                .tensors
                .get(&path)
                .ok_or_else(|| bad(format!("missing parameter {path}")))?;
            tensors.insert(path, t.clone());
        }
        if let Some(extra) = archive
            .tensors
            .keys()
            .find(|k| !k.contains('/') && !tensors.contains_key(*k))
        {
            return Err(bad(format!("unexpected parameter {extra}")));
        }
        let params = NetworkParams {
            config: archive.config.clone(),
            tensors,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive(serde_json::Value::Null).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let p = NetworkParams::init(&ModelConfig::desk(32)).unwrap();
        let bytes = p.to_archive(serde_json::json!({"note": "x"})).to_bytes().unwrap();
        let back = Archive::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(NetworkParams::from_archive(&back).unwrap(), p);
    }

    #[test]
    fn rejects_corruption() {
        let p = NetworkParams::init(&ModelConfig::desk(32)).unwrap();
        let bytes = p.to_archive(serde_json::Value::Null).to_bytes().unwrap();
        assert!(Archive::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Archive::from_bytes(&wrong).is_err());
        // config says GFP is off but GFP tensors are present
        let mut a = Archive::from_bytes(&bytes).unwrap();
        a.config.use_gfp = false;
        assert!(NetworkParams::from_archive(&a).is_err());
    }
}
