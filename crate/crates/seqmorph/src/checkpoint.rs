//! Binary parameter container.
//!
//! Layout: the 8-byte magic `SEQMCKP1`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then every tensor as row-major little-endian `f64`.
//! Offsets in the header count `f64` values from the start of the data block.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use seqmorph_core::generator::GeneratorParams;
use seqmorph_core::recommender::BackboneParams;
use seqmorph_core::Matrix;

use crate::error::FormatError;

pub const MAGIC: &[u8; 8] = b"SEQMCKP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tensors: Vec<TensorEntry>,
    /// Free-form metadata: the run config, epoch, validation score.
    pub meta: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Matrix)>,
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn new(backbone: &BackboneParams, generator: &GeneratorParams) -> Self {
        let tensors = backbone
            .named()
            .into_iter()
            .chain(generator.named())
            .map(|(n, m)| (n, m.clone()))
            .collect();
        Self {
            tensors,
            meta: serde_json::Map::new(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Matrix, FormatError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| FormatError::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn backbone(&self) -> Result<BackboneParams, FormatError> {
        Ok(BackboneParams {
            emb: self.get("backbone.emb")?.clone(),
            pos: self.get("backbone.pos")?.clone(),
            wq: self.get("backbone.wq")?.clone(),
            wk: self.get("backbone.wk")?.clone(),
            wv: self.get("backbone.wv")?.clone(),
        })
    }

    pub fn generator(&self) -> Result<GeneratorParams, FormatError> {
        Ok(GeneratorParams {
            w: self.get("generator.w")?.clone(),
            wq: [self.get("generator.wq1")?.clone(), self.get("generator.wq2")?.clone()],
            wk: [self.get("generator.wk1")?.clone(), self.get("generator.wk2")?.clone()],
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), FormatError> {
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, m)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: [m.rows(), m.cols()],
                    offset,
                };
                offset += m.as_slice().len();
                e
            })
            .collect();
        let header = Header {
            tensors,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| FormatError::Checkpoint(e.to_string()))?;
        let mut buf = Vec::with_capacity(16 + json.len() + offset * 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, m) in &self.tensors {
            for v in m.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| FormatError::Checkpoint(e.to_string()))
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, FormatError> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| FormatError::Checkpoint(e.to_string()))?;
        let bad = |d: &str| FormatError::Checkpoint(d.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let data_start = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[16..data_start]).map_err(|e| FormatError::Checkpoint(e.to_string()))?;
        let data = &bytes[data_start..];
        if data.len() % 8 != 0 {
            return Err(bad("data block is not a whole number of f64"));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensors = header
            .tensors
            .into_iter()
            .map(|e| {
                let len = e.shape[0] * e.shape[1];
                let slice = values
                    .get(e.offset..e.offset + len)
                    .ok_or_else(|| FormatError::Checkpoint(format!("tensor {} out of bounds", e.name)))?;
                Ok((e.name, Matrix::from_vec(e.shape[0], e.shape[1], slice.to_vec())))
            })
            .collect::<Result<_, FormatError>>()?;
        Ok(Self {
            tensors,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| FormatError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
        Self::read_from(bytes.as_slice())
    }
}
