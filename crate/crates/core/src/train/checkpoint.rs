//! Checkpoint container.
//!
//! ```text
//! magic   8 bytes  "MSECGCK\0"
//! version u32 LE
//! hlen    u32 LE   length of the JSON header
//! header  hlen bytes of JSON (configs, epoch, stage, val_mse, adam step, tensor names and shapes)
//! params  f32 LE, every tensor in header order
//! adam m  f32 LE, same layout
//! adam v  f32 LE, same layout
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OptimizerState, TrainConfig};
use crate::error::{Error, Result};
use crate::grad::Tensor;
use crate::model::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSECGCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub params: ModelParams<f32>,
    pub opt: OptimizerState<f32>,
    pub epoch: usize,
    pub stage: u8,
    pub val_mse: f64,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
    stage: u8,
    val_mse: f64,
    adam_step: u64,
    tensors: Vec<TensorMeta>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            stage: self.stage,
            val_mse: self.val_mse,
            adam_step: self.opt.t,
            tensors: self
                .params
                .named()
                .into_iter()
                .map(|(name, t)| TensorMeta { name, shape: t.shape().to_vec() })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 12 * self.params.count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let tensors = self.params.iter().chain(&self.opt.m).chain(&self.opt.v);
        for t in tensors {
            out.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let short = || Error::Format("file is truncated".into());
        if bytes.len() < 16 {
            return Err(short());
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(8);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let hlen = word(12) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(short)?;
        let header: Header = serde_json::from_slice(body)?;

        let mut params = ModelParams::<f32>::init(&header.model, 0)?;
        let names: Vec<(String, Vec<usize>)> =
            params.named().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        let listed: Vec<(String, Vec<usize>)> =
            header.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
        if names != listed {
            return Err(Error::Format("tensor table does not match the model configuration".into()));
        }
        let count = params.count();
        let payload = &bytes[16 + hlen..];
        if payload.len() != 12 * count {
            return Err(if payload.len() < 12 * count { short() } else { Error::Format("trailing bytes".into()) });
        }
        let mut floats = payload.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        let mut fill = |t: &mut Tensor<f32>| t.data_mut().iter_mut().for_each(|v| *v = floats.next().expect("sized"));
        params.iter_mut().into_iter().for_each(&mut fill);
        let mut opt = OptimizerState::new(params.iter());
        opt.m.iter_mut().for_each(&mut fill);
        opt.v.iter_mut().for_each(&mut fill);
        opt.t = header.adam_step;
        Ok(Checkpoint {
            version,
            model: header.model,
            train: header.train,
            params,
            opt,
            epoch: header.epoch,
            stage: header.stage,
            val_mse: header.val_mse,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Checkpoint::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
