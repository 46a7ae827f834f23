//! Versioned binary checkpoint format shared by all model kinds.
//!
//! Layout: 8-byte magic, little-endian u32 header length, a JSON header
//! (kind, version, training seed, hyperparameters, named parameter shapes),
//! then the parameter blocks as little-endian f64 in header order.
//! `read(write(m))` is byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MMVRCKP\n";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: String,
    seed: u64,
    hyper: serde_json::Value,
    params: Vec<ParamInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedBlock {
    pub name: String,
    pub tensor: Tensor,
}

/// A model checkpoint: kind tag, format version, hyperparameters, training
/// seed, and named flat parameter arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub kind: String,
    pub seed: u64,
    pub hyper: serde_json::Value,
    pub blocks: Vec<NamedBlock>,
}

impl ModelCheckpoint {
    pub fn new(kind: &str, seed: u64, hyper: serde_json::Value) -> Self {
        Self { kind: kind.to_string(), seed, hyper, blocks: Vec::new() }
    }

    pub fn push(&mut self, name: &str, tensor: Tensor) {
        self.blocks.push(NamedBlock { name: name.to_string(), tensor });
    }

    pub fn block(&self, name: &str) -> Result<&Tensor> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| &b.tensor)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter block {name:?}")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a {:?} model, expected {kind:?}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn hyper_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.hyper.clone())
            .map_err(|e| Error::Checkpoint(format!("bad hyperparameters: {e}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            kind: self.kind.clone(),
            seed: self.seed,
            hyper: self.hyper.clone(),
            params: self
                .blocks
                .iter()
                .map(|b| ParamInfo { name: b.name.clone(), shape: b.tensor.shape().to_vec() })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header_json);
        for block in &self.blocks {
            for v in block.tensor.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let too_short = || Error::Checkpoint("truncated checkpoint".into());
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12 + header_len;
        let header: Header =
            serde_json::from_slice(bytes.get(12..header_end).ok_or_else(too_short)?)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        let mut offset = header_end;
        let mut blocks = Vec::with_capacity(header.params.len());
        for info in &header.params {
            let numel: usize = info.shape.iter().product();
            let end = offset + numel * 8;
            let raw = bytes.get(offset..end).ok_or_else(too_short)?;
            let data: Vec<f64> =
                raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let tensor = Tensor::new(info.shape.clone(), data)
                .map_err(|e| Error::Checkpoint(format!("block {:?}: {e}", info.name)))?;
            blocks.push(NamedBlock { name: info.name.clone(), tensor });
            offset = end;
        }
        if offset != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after parameter blocks".into()));
        }
        Ok(Self { kind: header.kind, seed: header.seed, hyper: header.hyper, blocks })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
