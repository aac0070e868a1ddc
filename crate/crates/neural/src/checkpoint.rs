//! Single-file parameter checkpoints.
//!
//! Layout: the magic bytes `DSQCKPT\0`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, then every
//! tensor as little-endian `f64` values in header order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use discoseq::transition::Scheme;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::Mat;
use crate::model::{Model, ModelConfig, Params, Vocab};

pub const MAGIC: &[u8; 8] = b"DSQCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed header: {0}")]
    Header(String),
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    scheme: String,
    seed: u64,
    max_target_len: usize,
    tensors: Vec<TensorInfo>,
}

pub fn write_checkpoint<W: Write>(model: &Model, mut out: W) -> Result<(), CheckpointError> {
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        scheme: model.scheme.to_string(),
        seed: model.config.seed,
        max_target_len: model.max_target_len,
        tensors: model
            .params
            .names
            .iter()
            .zip(&model.params.mats)
            .map(|(name, m)| TensorInfo {
                name: name.clone(),
                rows: m.rows,
                cols: m.cols,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for m in &model.params.mats {
        for x in &m.data {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Model, CheckpointError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let len = usize::try_from(u64::from_le_bytes(b8)).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let scheme: Scheme = header.scheme.parse().map_err(|e: discoseq::transition::SchemeError| CheckpointError::Header(e.to_string()))?;
    let mut params = Params {
        names: Vec::new(),
        mats: Vec::new(),
    };
    for t in header.tensors {
        let mut data = Vec::with_capacity(t.rows * t.cols);
        for _ in 0..t.rows * t.cols {
            input.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        params.names.push(t.name);
        params.mats.push(Mat::from_vec(t.rows, t.cols, data));
    }
    let mut model = Model::new(header.config, header.vocab, scheme, header.max_target_len)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    if model.params.names != params.names
        || model.params.mats.iter().zip(&params.mats).any(|(a, b)| a.shape() != b.shape())
    {
        return Err(CheckpointError::Header("tensor list does not match the configuration".into()));
    }
    model.params = params;
    Ok(model)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
