//! Parameter checkpoints: an 8-byte little-endian header length, a JSON
//! header, then every parameter as little-endian `f64` in store order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "gwt-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub params: Vec<ParamEntry>,
}

/// Hex SHA-256 of the JSON encoding of `config`.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn save_checkpoint(path: &Path, store: &ParamStore<f64>, config_hash: &str) -> Result<()> {
    let header = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        config_hash: config_hash.into(),
        params: store.iter().map(|(name, t)| ParamEntry { name: name.into(), shape: t.shape().to_vec() }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in store.flatten() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint; fails if its hash differs from `expected_hash`.
pub fn load_checkpoint(path: &Path, expected_hash: Option<&str>) -> Result<(Checkpoint, ParamStore<f64>)> {
    let bad = |msg: String| Error::Parse { path: path.display().to_string(), line: 0, msg };
    let mut r = BufReader::new(File::open(path)?);
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| bad("header length overflows".into()))?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Checkpoint = serde_json::from_slice(&json)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unknown checkpoint format {:?}", header.format)));
    }
    if let Some(h) = expected_hash {
        if h != header.config_hash {
            return Err(bad(format!("config hash {} does not match {h}", header.config_hash)));
        }
    }
    let mut store = ParamStore::new();
    let mut buf = [0u8; 8];
    for entry in &header.params {
        let numel: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        store.add(entry.name.clone(), Tensor::new(&entry.shape, data)?);
    }
    if r.read(&mut buf)? != 0 {
        return Err(bad("trailing bytes after parameters".into()));
    }
    Ok((header, store))
}
