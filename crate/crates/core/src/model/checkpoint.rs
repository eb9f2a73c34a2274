use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::ModelConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    seed: u64,
    config: ModelConfig,
    tensors: Vec<Tensor>,
}

pub fn save_checkpoint(
    params: &ModelParams,
    config: &ModelConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut tensors = Vec::new();
    params.for_each(|name, shape, data| {
        tensors.push(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: data.to_vec(),
        })
    });
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        seed: config.seed,
        config: config.clone(),
        tensors,
    };
    let text = serde_json::to_string(&ck).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads parameters for `config`; the stored config echo must match it.
pub fn load_checkpoint(config: &ModelConfig, path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {} is not supported",
            ck.version
        )));
    }
    if ck.config != *config {
        return Err(Error::Format(
            "checkpoint was written for a different model config".into(),
        ));
    }
    let mut params = ModelParams::init(config, config.seed);
    let mut expected = Vec::new();
    params.for_each(|name, shape, _| expected.push((name.to_string(), shape.to_vec())));
    if expected.len() != ck.tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} tensors, config needs {}",
            ck.tensors.len(),
            expected.len()
        )));
    }
    for ((name, shape), t) in expected.iter().zip(&ck.tensors) {
        let size: usize = t.shape.iter().product();
        if *name != t.name || *shape != t.shape || size != t.data.len() {
            return Err(Error::Format(format!("tensor {} does not match {name}", t.name)));
        }
    }
    let mut k = 0;
    params.for_each_mut(|_, data| {
        data.copy_from_slice(&ck.tensors[k].data);
        k += 1;
    });
    Ok(params)
}
