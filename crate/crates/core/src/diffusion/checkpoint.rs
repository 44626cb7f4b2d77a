//! Binary checkpoint format.
//!
//! ```text
//! b"MDIF" | version: u8 | meta_len: u64 LE | meta: JSON | tensor payloads: f32 LE
//! ```
//!
//! The JSON header holds the training config, fitted schema, network shape,
//! and a table of `(name, shape, offset)` entries locating each tensor in the
//! payload. Offsets count f32 elements from the payload start.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::schedule::{build_vp_schedule, NoiseSchedule};
use crate::diffusion::train::TrainConfig;
use crate::error::{Error, Result};
use crate::missingness::RhoStats;
use crate::network::{NetworkConfig, NetworkParams, ScoreNetwork};
use crate::numerics::Tensor;
use crate::tabular::Schema;

pub const MAGIC: &[u8; 4] = b"MDIF";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub train_config: TrainConfig,
    pub schema: Schema,
    pub network: ScoreNetwork,
    pub schedule: NoiseSchedule,
    pub loss_trace: Vec<f32>,
    pub rho: RhoStats,
}

#[derive(Serialize, Deserialize)]
struct ScheduleMeta {
    timesteps: usize,
    beta_min: f64,
    beta_max: f64,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    train_config: TrainConfig,
    schema: Schema,
    network: NetworkConfig,
    schedule: ScheduleMeta,
    tensors: Vec<TensorEntry>,
    loss_trace: Vec<f64>,
    rho: RhoStats,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let tensors = self
            .network
            .params
            .named()
            .into_iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name,
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        let cfg = &self.train_config;
        let meta = Meta {
            train_config: cfg.clone(),
            schema: self.schema.clone(),
            network: self.network.config,
            schedule: ScheduleMeta {
                timesteps: cfg.timesteps,
                beta_min: cfg.beta_min,
                beta_max: cfg.beta_max,
            },
            tensors,
            loss_trace: self.loss_trace.iter().map(|&v| v as f64).collect(),
            rho: self.rho.clone(),
        };
        let json = serde_json::to_vec(&meta)?;
        let mut out = Vec::with_capacity(13 + json.len() + offset * 4);
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.network.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 13 || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let meta_len = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes")) as usize;
        let payload_start = 13usize
            .checked_add(meta_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated metadata".into()))?;
        let meta: Meta = serde_json::from_slice(&bytes[13..payload_start])?;
        let payload = &bytes[payload_start..];
        if !payload.len().is_multiple_of(4) {
            return Err(Error::Checkpoint("payload is not a whole number of f32 values".into()));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();

        let tensors = meta
            .tensors
            .iter()
            .map(|e| {
                let len: usize = e.shape.iter().product();
                let data = floats
                    .get(e.offset..e.offset + len)
                    .ok_or_else(|| Error::Checkpoint(format!("tensor {} runs past the payload", e.name)))?;
                Tensor::new(e.shape.clone(), data.to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        let params = NetworkParams::from_tensors(&meta.network, tensors)?;
        if params.named().iter().zip(&meta.tensors).any(|((name, _), e)| *name != e.name) {
            return Err(Error::Checkpoint("tensor table does not match the network layout".into()));
        }
        let schedule = build_vp_schedule(meta.schedule.timesteps, meta.schedule.beta_min, meta.schedule.beta_max)?;
        Ok(Checkpoint {
            train_config: meta.train_config,
            schema: Schema::new(meta.schema.columns)?,
            network: ScoreNetwork {
                config: meta.network,
                params,
            },
            schedule,
            loss_trace: meta.loss_trace.iter().map(|&v| v as f32).collect(),
            rho: meta.rho,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
