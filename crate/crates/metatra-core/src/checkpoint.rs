//! Checkpoint archives: a JSON manifest followed by flat little-endian f64
//! arrays, in one file. Byte-identical save/load round trips give bit-exact
//! resume.
//!
//! Layout: `MTCK0001` magic, u64 LE manifest length, manifest JSON, then the
//! raw array section. The manifest lists every array (name, kind, shape,
//! dtype, offset into the raw section) plus run bookkeeping: epoch counter,
//! the run seed (per-epoch streams are derived from `(seed, epoch, ...)`,
//! so seed + epoch fully determine the resumed random state), the source
//! aggregate, and a config echo.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::mgtp::{AdamState, SourcePriorAggregate, TrainState};
use crate::params::ParameterSnapshot;

const MAGIC: &[u8; 8] = b"MTCK0001";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    kind: ArrayKind,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ArrayKind {
    Param,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    tool_version: String,
    epoch: usize,
    seed: u64,
    rng: RngRecord,
    adam_t: Option<u64>,
    aggregate: SourcePriorAggregate,
    config: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RngRecord {
    algo: String,
    seed: u64,
    next_epoch: usize,
}

/// Everything needed to resume a run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: TrainState,
    pub seed: u64,
    pub config: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut arrays: Vec<ArrayEntry> = Vec::new();
    let mut raw: Vec<u8> = Vec::new();
    let mut push_array = |name: &str, kind: ArrayKind, a: &ArrayD<f64>, raw: &mut Vec<u8>| {
        let offset = raw.len() as u64;
        for v in a.iter() {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        arrays.push(ArrayEntry {
            name: name.to_string(),
            kind,
            shape: a.shape().to_vec(),
            dtype: "f64".into(),
            offset,
        });
    };

    for (name, a) in ckpt.state.snapshot.iter() {
        push_array(name, ArrayKind::Param, a, &mut raw);
    }
    if let Some(adam) = &ckpt.state.adam {
        for (name, a) in adam.m.iter() {
            push_array(name, ArrayKind::AdamM, a, &mut raw);
        }
        for (name, a) in adam.v.iter() {
            push_array(name, ArrayKind::AdamV, a, &mut raw);
        }
    }

    let manifest = Manifest {
        version: 1,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        epoch: ckpt.state.epoch,
        seed: ckpt.seed,
        rng: RngRecord {
            algo: "chacha8/derived-per-epoch".into(),
            seed: ckpt.seed,
            next_epoch: ckpt.state.epoch,
        },
        adam_t: ckpt.state.adam.as_ref().map(|a| a.t),
        aggregate: ckpt.state.aggregate.clone(),
        config: ckpt.config.clone(),
        arrays,
    };
    let manifest_json = serde_json::to_vec(&manifest)
        .map_err(|e| CoreError::Checkpoint(format!("manifest encode: {e}")))?;

    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(manifest_json.len() as u64).to_le_bytes())?;
    file.write_all(&manifest_json)?;
    file.write_all(&raw)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::Checkpoint(format!(
            "{}: bad magic (not a checkpoint archive)",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_json = vec![0u8; manifest_len];
    file.read_exact(&mut manifest_json)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_json)
        .map_err(|e| CoreError::Checkpoint(format!("manifest decode: {e}")))?;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;

    let read_array = |entry: &ArrayEntry| -> Result<ArrayD<f64>> {
        if entry.dtype != "f64" {
            return Err(CoreError::Checkpoint(format!(
                "array {}: unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + count * 8;
        if end > raw.len() {
            return Err(CoreError::Checkpoint(format!(
                "array {}: raw section too short",
                entry.name
            )));
        }
        let values: Vec<f64> = raw[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        ArrayD::from_shape_vec(entry.shape.clone(), values)
            .map_err(|e| CoreError::Checkpoint(format!("array {}: {e}", entry.name)))
    };

    let mut snapshot = ParameterSnapshot::new();
    let mut adam_m = ParameterSnapshot::new();
    let mut adam_v = ParameterSnapshot::new();
    for entry in &manifest.arrays {
        let a = read_array(entry)?;
        match entry.kind {
            ArrayKind::Param => {
                snapshot.register(entry.name.clone(), a);
            }
            ArrayKind::AdamM => {
                adam_m.register(entry.name.clone(), a);
            }
            ArrayKind::AdamV => {
                adam_v.register(entry.name.clone(), a);
            }
        }
    }
    let adam = manifest.adam_t.map(|t| AdamState { m: adam_m, v: adam_v, t });

    Ok(Checkpoint {
        state: TrainState {
            snapshot,
            aggregate: manifest.aggregate,
            epoch: manifest.epoch,
            adam,
        },
        seed: manifest.seed,
        config: manifest.config,
    })
}
