//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "RRTY" | u32 version | u32 tensor count
//! per tensor: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | f32 data[..]
//! ```
//!
//! Optimizer velocity is not stored.

use thiserror::Error;

use crate::tensor::Tensor;

use super::{Model, NetConfig, Topology};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RRTY";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("checkpoint holds {found} tensors, topology needs {expected}")]
    TensorCount { expected: usize, found: usize },
    #[error("tensor {index}: expected {expected} {expected_shape:?}, found {found} {found_shape:?}")]
    ShapeDisagreement {
        index: usize,
        expected: String,
        expected_shape: Vec<usize>,
        found: String,
        found_shape: Vec<usize>,
    },
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub fn save_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * model.param_count() + 64 * model.params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, t) in model.names.iter().zip(&model.params) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Restores a model whose topology is given by `config`; every stored
/// tensor must match the topology's name and shape, in order.
pub fn load_checkpoint(bytes: &[u8], config: &NetConfig) -> Result<Model, CheckpointError> {
    config.validate().map_err(|e| CheckpointError::Config(e.to_string()))?;
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch(version));
    }
    let topology = Topology::new(config);
    let ledger = topology.ledger();
    let count = r.u32()? as usize;
    if count != ledger.len() {
        return Err(CheckpointError::TensorCount {
            expected: ledger.len(),
            found: count,
        });
    }
    let mut params = Vec::with_capacity(count);
    for (index, spec) in ledger.iter().enumerate() {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| CheckpointError::BadName)?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if name != spec.name || shape != spec.shape {
            return Err(CheckpointError::ShapeDisagreement {
                index,
                expected: spec.name.clone(),
                expected_shape: spec.shape.clone(),
                found: name.to_string(),
                found_shape: shape,
            });
        }
        let n: usize = shape.iter().product();
        let raw = r.take(4 * n)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        params.push(Tensor::new(&shape, data).expect("length checked"));
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Model::assemble(config.clone(), topology, ledger, params).map_err(|e| CheckpointError::Config(e.to_string()))
}
