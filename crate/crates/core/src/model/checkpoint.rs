//! JSON checkpoint container.
//!
//! ```json
//! {
//!   "format": "rnnt-lab.checkpoint",
//!   "version": 1,
//!   "config": { ...ModelConfig... },
//!   "tensors": [ { "name": "encoder.0.w_ih", "shape": [32, 256], "data": [...] }, ... ]
//! }
//! ```
//!
//! Tensors appear in registration order; `data` is row-major. Floats are
//! written in shortest round-trip form, so save/load is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, RnntModel};
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};

pub const CHECKPOINT_FORMAT: &str = "rnnt-lab.checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &RnntModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: model.config().clone(),
            tensors: model
                .params()
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<RnntModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut params = ParamSet::new();
        for t in self.tensors {
            params.add(t.name, Tensor::new(t.shape, t.data)?)?;
        }
        RnntModel::from_params(self.config, params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn save_checkpoint(model: &RnntModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, Checkpoint::from_model(model).to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<RnntModel> {
    Checkpoint::from_json(&fs::read_to_string(path)?)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_is_lossless() {
        let cfg = ModelConfig {
            use_layer_norm: true,
            ..ModelConfig::default()
        };
        let model = RnntModel::new(cfg, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
        let first = fs::read_to_string(&path).unwrap();
        save_checkpoint(&back, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), first);
    }

    #[test]
    fn rejects_foreign_containers() {
        let model = RnntModel::new(ModelConfig::default(), 1).unwrap();
        let mut ck = Checkpoint::from_model(&model);
        ck.version = 99;
        assert!(ck.clone().into_model().is_err());
        ck.version = CHECKPOINT_VERSION;
        ck.tensors.pop();
        assert!(ck.into_model().is_err());
    }
}
