//! Model checkpoints.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic    8 bytes "QDISCKPT", u32 version = 1, u32 reserved = 0
//! config   u32 length, UTF-8 JSON of ModelConfig
//! kernels  32 x f64
//! hidden   u32 count, then per layer:
//!          u32 inputs, u32 outputs, u8 has_bn, weights, biases,
//!          [gamma, beta, running_mean, running_var]
//! output   u32 inputs, weights, f64 bias
//! ```
//!
//! Training metadata lives in a JSON sidecar next to the binary file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BatchNorm, Dense, EpochRecord, HiddenLayer, Metrics, Model, ModelConfig, BN_MOMENTUM};
use crate::codec::{put_f64s, ByteReader};
use crate::error::{Error, Result};
use crate::features::{PathSet, KERNEL_PARAMS};

const MAGIC: &[u8; 8] = b"QDISCKPT";
const VERSION: u32 = 1;
/// Upper bound on a single layer width accepted by the decoder.
const MAX_WIDTH: usize = 1 << 16;
const MAX_CONFIG_LEN: usize = 1 << 20;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub test_metrics: Option<Metrics>,
    pub history: Vec<EpochRecord>,
    /// Content hash of the training dataset, if known.
    pub dataset_hash: Option<String>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    let config = serde_json::to_vec(&model.config).expect("config serializes");
    put_u32(&mut out, config.len());
    out.extend_from_slice(&config);
    put_f64s(&mut out, &model.kernel_params);
    put_u32(&mut out, model.hidden.len());
    for layer in &model.hidden {
        put_u32(&mut out, layer.dense.inputs);
        put_u32(&mut out, layer.dense.outputs);
        out.push(layer.batchnorm.is_some() as u8);
        put_f64s(&mut out, &layer.dense.weights);
        put_f64s(&mut out, &layer.dense.biases);
        if let Some(bn) = &layer.batchnorm {
            for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                put_f64s(&mut out, v);
            }
        }
    }
    put_u32(&mut out, model.output.inputs);
    put_f64s(&mut out, &model.output.weights);
    put_f64s(&mut out, &model.output.biases);
    out
}

fn width(r: &mut ByteReader, what: &str) -> Result<usize> {
    let v = r.u32()? as usize;
    if v == 0 || v > MAX_WIDTH {
        return Err(r.error(format!("{what} width {v} out of range")));
    }
    Ok(v)
}

fn finite_vec(r: &mut ByteReader, n: usize) -> Result<Vec<f64>> {
    let v = r.f64_vec(n)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(r.error("non-finite parameter"));
    }
    Ok(v)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = ByteReader::new(bytes, "checkpoint");
    if r.array::<8>()? != *MAGIC {
        return Err(r.error("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    r.u32()?;
    let config_len = r.u32()? as usize;
    if config_len > MAX_CONFIG_LEN {
        return Err(r.error("config block too large"));
    }
    let config: ModelConfig = serde_json::from_slice(r.take(config_len)?)
        .map_err(|e| Error::format("checkpoint", format!("config: {e}")))?;
    config
        .validate()
        .map_err(|e| Error::format("checkpoint", format!("config: {e}")))?;
    let paths = PathSet::first(config.path_count)?;
    let kernel_params: [f64; KERNEL_PARAMS] = finite_vec(&mut r, KERNEL_PARAMS)?.try_into().unwrap();

    let count = r.u32()? as usize;
    if count != config.hidden.len() {
        return Err(r.error(format!("{count} hidden layers, config has {}", config.hidden.len())));
    }
    let mut hidden = Vec::with_capacity(count);
    let mut expected_in = paths.len();
    for (index, &h) in config.hidden.iter().enumerate() {
        let inputs = width(&mut r, "input")?;
        let outputs = width(&mut r, "output")?;
        if inputs != expected_in || outputs != h {
            return Err(r.error(format!("hidden layer {index} has shape {inputs}x{outputs}")));
        }
        let has_bn = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(r.error(format!("bad batchnorm flag {other}"))),
        };
        if has_bn != config.batchnorm {
            return Err(r.error("batchnorm flag disagrees with config"));
        }
        let weights = finite_vec(&mut r, inputs * outputs)?;
        let biases = finite_vec(&mut r, outputs)?;
        let batchnorm = if has_bn {
            let gamma = finite_vec(&mut r, outputs)?;
            let beta = finite_vec(&mut r, outputs)?;
            let running_mean = finite_vec(&mut r, outputs)?;
            let running_var = finite_vec(&mut r, outputs)?;
            if running_var.iter().any(|&v| v < 0.0) {
                return Err(r.error("negative running variance"));
            }
            Some(BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                momentum: BN_MOMENTUM,
            })
        } else {
            None
        };
        hidden.push(HiddenLayer {
            dense: Dense {
                inputs,
                outputs,
                weights,
                biases,
            },
            batchnorm,
        });
        expected_in = outputs;
    }
    let inputs = width(&mut r, "head input")?;
    if inputs != expected_in {
        return Err(r.error(format!("head expects {inputs} inputs, network provides {expected_in}")));
    }
    let output = Dense {
        inputs,
        outputs: 1,
        weights: finite_vec(&mut r, inputs)?,
        biases: finite_vec(&mut r, 1)?,
    };
    r.finish()?;
    Ok(Model {
        config,
        paths,
        kernel_params,
        hidden,
        output,
    })
}

/// Path of the JSON sidecar belonging to a checkpoint file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_checkpoint(path: impl AsRef<Path>, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model))?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

/// Reads a checkpoint; the sidecar is optional.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(Model, Option<CheckpointMeta>)> {
    let path = path.as_ref();
    let model = decode_checkpoint(&fs::read(path)?)?;
    let sidecar = sidecar_path(path);
    let meta = if sidecar.exists() {
        Some(serde_json::from_slice(&fs::read(sidecar)?)?)
    } else {
        None
    };
    Ok((model, meta))
}
