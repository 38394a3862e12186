//! JSON checkpoints: the model spec plus every named tensor in row-major
//! order. Floats are written in shortest round-trip form, so a reload
//! reproduces predictions bit-for-bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "xcm-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub spec: ModelSpec,
    pub trainable_parameters: usize,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        let mut model = model.clone();
        let trainable_parameters = model.count_parameters();
        let tensors = model
            .tensors_mut()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            spec: model.spec().clone(),
            trainable_parameters,
            tensors,
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        let mut model = Model::new(self.spec, 0)?;
        {
            let slots = model.tensors_mut();
            if slots.len() != self.tensors.len() {
                return Err(Error::Checkpoint(format!(
                    "expected {} tensors, found {}",
                    slots.len(),
                    self.tensors.len()
                )));
            }
            for ((name, slot), stored) in slots.into_iter().zip(self.tensors) {
                if name != stored.name || slot.shape() != stored.shape.as_slice() {
                    return Err(Error::Checkpoint(format!(
                        "tensor {:?} {:?} does not match {name:?} {:?}",
                        stored.name,
                        stored.shape,
                        slot.shape()
                    )));
                }
                if stored.data.len() != slot.len() {
                    return Err(Error::Checkpoint(format!("tensor {name:?} has wrong length")));
                }
                slot.data_mut().copy_from_slice(&stored.data);
            }
        }
        if model.count_parameters() != self.trainable_parameters {
            return Err(Error::Checkpoint("parameter count mismatch".into()));
        }
        Ok(model)
    }
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string(&Checkpoint::from_model(model))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    ckpt.into_model()
}
