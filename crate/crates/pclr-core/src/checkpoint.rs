//! Bit-exact model checkpoint container.
//!
//! Layout: 8-byte magic `PCLRCKPT`, little-endian `u32` format version,
//! little-endian `u64` header byte length, a UTF-8 JSON header (encoder
//! config, epoch, optimizer state, array directory), then the raw
//! little-endian `f32` payload. Directory offsets and lengths are in
//! elements. Save followed by load is bitwise identity for every array,
//! including Adam moments and batch-norm moving statistics.

use crate::encoder::{build_model, EncoderConfig, ModelState};
use crate::error::{Error, Result};
use crate::optim::AdamConfig;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"PCLRCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in f32 elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: EncoderConfig,
    pub epoch: u64,
    pub adam: AdamConfig,
    pub arrays: Vec<ArrayEntry>,
}

/// The arrays a model contributes, in directory order.
fn model_arrays(model: &ModelState) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut out = Vec::new();
    for (name, p) in model.params() {
        out.push((name.clone(), p.value.shape().to_vec(), p.value.data().to_vec()));
        if p.trainable {
            out.push((format!("{name}.adam_m"), p.m.shape().to_vec(), p.m.data().to_vec()));
            out.push((format!("{name}.adam_v"), p.v.shape().to_vec(), p.v.data().to_vec()));
        }
    }
    out
}

pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    let arrays = model_arrays(model);
    let mut directory = Vec::with_capacity(arrays.len());
    let mut offset = 0usize;
    for (name, shape, data) in &arrays {
        directory.push(ArrayEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset,
            len: data.len(),
        });
        offset += data.len();
    }
    let header = CheckpointHeader {
        config: model.config.clone(),
        epoch: model.epoch,
        adam: model.adam.clone(),
        arrays: directory,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("header encode: {e}")))?;

    let mut file = fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    let mut payload = Vec::with_capacity(offset * 4);
    for (_, _, data) in &arrays {
        for v in data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&payload)?;
    Ok(())
}

fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".to_string()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unknown version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() < 20 + header_len {
        return Err(Error::Checkpoint("truncated header".to_string()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[20..20 + header_len])
        .map_err(|e| Error::Checkpoint(format!("header parse: {e}")))?;
    Ok((header, 20 + header_len))
}

/// Loads a checkpoint, rebuilding the model from the embedded config.
pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let (header, payload_start) = read_header(&bytes)?;

    let expected_elems: usize = header.arrays.iter().map(|a| a.len).sum();
    let payload = &bytes[payload_start..];
    if payload.len() != expected_elems * 4 {
        return Err(Error::Checkpoint(format!(
            "payload length mismatch: expected {} bytes, got {}",
            expected_elems * 4,
            payload.len()
        )));
    }
    // Directory offsets must tile the payload contiguously.
    let mut cursor = 0usize;
    for a in &header.arrays {
        if a.offset != cursor || a.shape.iter().product::<usize>() != a.len {
            return Err(Error::Checkpoint(format!(
                "inconsistent directory entry for array '{}'",
                a.name
            )));
        }
        cursor += a.len;
    }

    let mut model: ModelState = build_model(&header.config, 0)?;
    model.epoch = header.epoch;
    model.adam = header.adam.clone();

    let read_array = |entry: &ArrayEntry| -> Vec<f32> {
        let start = entry.offset * 4;
        payload[start..start + entry.len * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect()
    };
    let by_name: std::collections::HashMap<&str, &ArrayEntry> =
        header.arrays.iter().map(|a| (a.name.as_str(), a)).collect();

    for (name, p) in model.params_mut() {
        let mut targets: Vec<(String, &mut crate::tensor::Tensor<f32>)> =
            vec![(name.clone(), &mut p.value)];
        if p.trainable {
            targets.push((format!("{name}.adam_m"), &mut p.m));
            targets.push((format!("{name}.adam_v"), &mut p.v));
        }
        for (array_name, tensor) in targets {
            let entry = by_name.get(array_name.as_str()).ok_or_else(|| {
                Error::Checkpoint(format!("missing array '{array_name}'"))
            })?;
            if entry.shape != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for array '{}': checkpoint {:?}, model {:?}",
                    array_name,
                    entry.shape,
                    tensor.shape()
                )));
            }
            tensor.data_mut().copy_from_slice(&read_array(entry));
        }
    }
    Ok(model)
}

/// Loads a checkpoint and verifies it matches the requested config,
/// naming the first offending array on mismatch.
pub fn load_checkpoint_expecting(path: &Path, expected: &EncoderConfig) -> Result<ModelState> {
    let model = load_checkpoint(path)?;
    let reference: ModelState = build_model(expected, 0)?;
    for ((name, got), (_, want)) in model.params().iter().zip(reference.params().iter()) {
        if got.value.shape() != want.value.shape() {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for array '{}': checkpoint {:?}, requested config {:?}",
                name,
                got.value.shape(),
                want.value.shape()
            )));
        }
    }
    Ok(model)
}
