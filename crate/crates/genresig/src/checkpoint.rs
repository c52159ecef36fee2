//! Model checkpoints.
//!
//! Layout (little-endian): `"TSIG"`, u32 version, u32 byte length of a UTF-8
//! JSON header `{"model": ModelConfig, "genres": [..]}`, the header, u32
//! block count, then per parameter block: u32 name length, UTF-8 name, u32
//! rank, one u32 per extent, and the values as row-major f32.

use std::fs;
use std::path::Path;

use genresig_core::model::{ModelConfig, ModelParams};
use genresig_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TSIG";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub genres: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub genres: Vec<String>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(params: &ModelParams, genres: &[String]) -> Vec<u8> {
    let header = CheckpointHeader { model: params.config.clone(), genres: genres.to_vec() };
    let json = serde_json::to_vec(&header).expect("config serializes");
    let mut out = Vec::with_capacity(64 + json.len() + 4 * params.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut out, json.len());
    out.extend_from_slice(&json);
    put_u32(&mut out, params.parameters().len());
    for p in params.parameters() {
        put_u32(&mut out, p.name.len());
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.value.rank());
        for &e in p.value.shape() {
            put_u32(&mut out, e);
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::TruncatedFile(format!("checkpoint ends inside {what}")));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
}

/// Parses a checkpoint image. Nothing is returned unless every block is
/// present and matches the shapes implied by the embedded model config.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: "TSIG" });
    }
    let mut r = Reader { bytes, at: 4 };
    let version = r.u32("version")? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion { found: version, supported: CHECKPOINT_VERSION });
    }
    let len = r.u32("header length")?;
    let header: CheckpointHeader = serde_json::from_slice(r.take(len, "header")?)
        .map_err(|e| Error::Invalid(format!("checkpoint header: {e}")))?;
    let count = r.u32("block count")?;
    let mut tensors = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let name_len = r.u32("block name length")?;
        let name = String::from_utf8(r.take(name_len, "block name")?.to_vec())
            .map_err(|_| Error::Invalid("checkpoint block name is not UTF-8".into()))?;
        let rank = r.u32("block rank")?;
        let shape = (0..rank).map(|_| r.u32("block extents")).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Invalid("block too large".into()))?, &name)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        tensors.push((name, Tensor::new(&shape, values)?));
    }
    let params = ModelParams::from_tensors(&header.model, tensors)?;
    Ok(Checkpoint { params, genres: header.genres })
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, genres: &[String]) -> Result<()> {
    fs::write(path, encode_checkpoint(params, genres)).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_checkpoint(&bytes)
}
