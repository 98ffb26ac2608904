//! Versioned, checksummed weight and checkpoint files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{NetConfig, PredictorNet};
use super::train::{AdamState, EpochLog, TrainConfig, TrainState};
use crate::container::{ArrayData, Container};
use crate::error::{Error, Result};

pub const WEIGHTS_FORMAT_VERSION: &str = "1";
const WEIGHTS_MAGIC: &[u8; 8] = b"PFWEIGHT";
const WEIGHTS_KIND: &str = "predictor-weights";
const CHECKPOINT_MAGIC: &[u8; 8] = b"PFCKPT\0\0";
const CHECKPOINT_KIND: &str = "training-checkpoint";

fn json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Format(e.to_string()))
}

fn from_json<T: for<'de> Deserialize<'de>>(v: &serde_json::Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Format(e.to_string()))
}

pub fn weights_to_bytes(net: &PredictorNet) -> Result<Vec<u8>> {
    let mut c = Container::new(WEIGHTS_KIND, WEIGHTS_FORMAT_VERSION, json(net.config())?);
    c.push("params", &[net.num_params()], ArrayData::F64(net.params().to_vec()))?;
    c.to_bytes(WEIGHTS_MAGIC)
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<PredictorNet> {
    let c = Container::from_bytes(bytes, WEIGHTS_MAGIC, WEIGHTS_KIND, WEIGHTS_FORMAT_VERSION)?;
    let cfg: NetConfig = from_json(&c.meta)?;
    PredictorNet::from_params(cfg, c.f64s("params")?)
}

pub fn save_weights(net: &PredictorNet, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, weights_to_bytes(net)?)?)
}

/// Loads weights; fails when the stored configuration differs from
/// `expected` (if given).
pub fn load_weights(path: &Path, expected: Option<&NetConfig>) -> Result<PredictorNet> {
    let net = weights_from_bytes(&std::fs::read(path)?)?;
    if let Some(cfg) = expected {
        if cfg != net.config() {
            return Err(Error::Config("stored network configuration does not match the expected one".into()));
        }
    }
    Ok(net)
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    net: NetConfig,
    train: TrainConfig,
    adam_step: u64,
    log: Vec<EpochLog>,
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let meta = CheckpointMeta {
        net: state.net.config().clone(),
        train: state.config.clone(),
        adam_step: state.adam.step,
        log: state.log.clone(),
    };
    let n = state.net.num_params();
    let mut c = Container::new(CHECKPOINT_KIND, WEIGHTS_FORMAT_VERSION, json(&meta)?);
    c.push("params", &[n], ArrayData::F64(state.net.params().to_vec()))?;
    c.push("adam_m", &[n], ArrayData::F64(state.adam.m.clone()))?;
    c.push("adam_v", &[n], ArrayData::F64(state.adam.v.clone()))?;
    Ok(std::fs::write(path, c.to_bytes(CHECKPOINT_MAGIC)?)?)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path)?;
    let c = Container::from_bytes(&bytes, CHECKPOINT_MAGIC, CHECKPOINT_KIND, WEIGHTS_FORMAT_VERSION)?;
    let meta: CheckpointMeta = from_json(&c.meta)?;
    let net = PredictorNet::from_params(meta.net, c.f64s("params")?)?;
    let (m, v) = (c.f64s("adam_m")?, c.f64s("adam_v")?);
    Error::check_dim("Adam first moment", net.num_params(), m.len())?;
    Error::check_dim("Adam second moment", net.num_params(), v.len())?;
    Ok(TrainState { net, config: meta.train, adam: AdamState { step: meta.adam_step, m, v }, log: meta.log })
}
