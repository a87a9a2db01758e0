//! Checkpoint and training-state files.
//!
//! A checkpoint is a self-describing container: a JSON header with the
//! config, vocabulary hash, provenance chain and metric history, followed by
//! the parameter blobs as little-endian 32-bit floats in declaration order.

use super::train::TrainState;
use super::{build_model, Checkpoint, ModelError};
use crate::corpus::Vocabulary;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const CKPT_MAGIC: &[u8; 8] = b"CVPCKPT1";
const STATE_MAGIC: &[u8; 8] = b"CVPSTAT1";

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    model_id: String,
    config: super::ModelConfig,
    train_config: Option<super::TrainConfig>,
    vocab_hash: String,
    vocab_size: usize,
    provenance: Vec<super::ProvenanceEntry>,
    metrics: Vec<super::EpochMetric>,
    best_valid_ppl: Option<f64>,
    updates: u64,
    frozen: bool,
    params: Vec<ParamMeta>,
}

fn io_err(path: &Path, e: std::io::Error) -> ModelError {
    ModelError::Io(path.display().to_string(), e)
}

fn bad(path: &Path, reason: impl Into<String>) -> ModelError {
    ModelError::BadCheckpoint { path: path.display().to_string(), reason: reason.into() }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    let header = CheckpointHeader {
        model_id: ckpt.model_id.clone(),
        config: ckpt.config.clone(),
        train_config: ckpt.train_config.clone(),
        vocab_hash: ckpt.vocab_hash.clone(),
        vocab_size: ckpt.vocab_size,
        provenance: ckpt.provenance.clone(),
        metrics: ckpt.metrics.clone(),
        best_valid_ppl: ckpt.best_valid_ppl,
        updates: ckpt.updates,
        frozen: ckpt.frozen,
        params: ckpt
            .model
            .params()
            .iter()
            .map(|p| ParamMeta { name: p.name.clone(), rows: p.w.nrows(), cols: p.w.ncols() })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    out.write_all(CKPT_MAGIC).map_err(|e| io_err(path, e))?;
    out.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(|e| io_err(path, e))?;
    out.write_all(&header_json).map_err(|e| io_err(path, e))?;
    for p in ckpt.model.params() {
        for v in p.w.iter() {
            out.write_all(&(*v as f32).to_le_bytes()).map_err(|e| io_err(path, e))?;
        }
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint, ModelError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut input = std::io::BufReader::new(file);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != CKPT_MAGIC {
        return Err(bad(path, "bad magic"));
    }
    let mut len_bytes = [0u8; 8];
    input.read_exact(&mut len_bytes).map_err(|e| io_err(path, e))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    input.read_exact(&mut header_bytes).map_err(|e| io_err(path, e))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| bad(path, e.to_string()))?;

    if header.vocab_hash != vocab.hash() {
        return Err(ModelError::VocabMismatch {
            expected: header.vocab_hash,
            actual: vocab.hash(),
        });
    }
    if header.vocab_size != vocab.len() {
        return Err(bad(path, format!("vocab size {} != {}", header.vocab_size, vocab.len())));
    }

    // rebuild the architecture, then overwrite every parameter from blobs
    let mut ckpt = build_model(&header.config, vocab, 0)?;
    {
        let mut params = ckpt.model.params_mut();
        if params.len() != header.params.len() {
            return Err(bad(path, "parameter inventory mismatch"));
        }
        for (p, meta) in params.iter_mut().zip(&header.params) {
            if p.name != meta.name || p.w.nrows() != meta.rows || p.w.ncols() != meta.cols {
                return Err(bad(path, format!("parameter {} shape/name mismatch", meta.name)));
            }
            let mut buf = vec![0u8; meta.rows * meta.cols * 4];
            input.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
            for (i, slot) in p.w.iter_mut().enumerate() {
                let bytes: [u8; 4] = buf[i * 4..i * 4 + 4].try_into().expect("chunk of 4");
                *slot = f32::from_le_bytes(bytes) as f64;
            }
        }
    }
    ckpt.model_id = header.model_id;
    ckpt.train_config = header.train_config;
    ckpt.provenance = header.provenance;
    ckpt.metrics = header.metrics;
    ckpt.best_valid_ppl = header.best_valid_ppl;
    ckpt.updates = header.updates;
    ckpt.frozen = header.frozen;
    Ok(ckpt)
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    epoch: usize,
    updates: u64,
    initial_ppl: f64,
    bad_streak: usize,
    above_initial_streak: usize,
    adam_step: u64,
    tensor_lens: Vec<usize>,
    has_best: bool,
    best_valid_ppl: Option<f64>,
}

pub fn save_train_state(state: &TrainState, path: &Path) -> Result<(), ModelError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    let header = StateHeader {
        epoch: state.epoch,
        updates: state.updates,
        initial_ppl: state.initial_ppl,
        bad_streak: state.bad_streak,
        above_initial_streak: state.above_initial_streak,
        adam_step: state.adam_step,
        tensor_lens: state.adam_m.iter().map(|m| m.len()).collect(),
        has_best: state.best_params.is_some(),
        best_valid_ppl: state.best_valid_ppl,
    };
    let header_json = serde_json::to_vec(&header).expect("state header serializes");
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    out.write_all(STATE_MAGIC).map_err(|e| io_err(path, e))?;
    out.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(|e| io_err(path, e))?;
    out.write_all(&header_json).map_err(|e| io_err(path, e))?;
    let mut write_blobs = |tensors: &[Vec<f64>]| -> Result<(), ModelError> {
        for t in tensors {
            for v in t {
                out.write_all(&v.to_le_bytes()).map_err(|e| io_err(path, e))?;
            }
        }
        Ok(())
    };
    write_blobs(&state.adam_m)?;
    write_blobs(&state.adam_v)?;
    if let Some(best) = &state.best_params {
        write_blobs(best)?;
    }
    Ok(())
}

pub fn load_train_state(path: &Path) -> Result<TrainState, ModelError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut input = std::io::BufReader::new(file);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != STATE_MAGIC {
        return Err(bad(path, "bad magic"));
    }
    let mut len_bytes = [0u8; 8];
    input.read_exact(&mut len_bytes).map_err(|e| io_err(path, e))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    input.read_exact(&mut header_bytes).map_err(|e| io_err(path, e))?;
    let header: StateHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| bad(path, e.to_string()))?;

    let mut read_blobs = |lens: &[usize]| -> Result<Vec<Vec<f64>>, ModelError> {
        let mut out = Vec::with_capacity(lens.len());
        for &len in lens {
            let mut buf = vec![0u8; len * 8];
            input.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
            out.push(
                buf.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect(),
            );
        }
        Ok(out)
    };
    let adam_m = read_blobs(&header.tensor_lens)?;
    let adam_v = read_blobs(&header.tensor_lens)?;
    let best_params = if header.has_best { Some(read_blobs(&header.tensor_lens)?) } else { None };
    Ok(TrainState {
        epoch: header.epoch,
        updates: header.updates,
        initial_ppl: header.initial_ppl,
        bad_streak: header.bad_streak,
        above_initial_streak: header.above_initial_streak,
        adam_step: header.adam_step,
        adam_m,
        adam_v,
        best_valid_ppl: header.best_valid_ppl,
        best_params,
    })
}
