//! Checkpoint files: config, vocabulary and every named parameter tensor.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! reloaded model reproduces forward outputs bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use slfnet_core::encoders::Vocab;
use slfnet_core::{Model, Tensor, TrainConfig};

use crate::error::{IoError, IoResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub vocab: Vec<String>,
    pub params: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            vocab: model.vocab.tokens().to_vec(),
            params: model
                .params
                .iter()
                .map(|(_, name, t)| StoredTensor {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> slfnet_core::Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(slfnet_core::Error::Data(format!(
                "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let vocab = Vocab::from_list(self.vocab)?;
        let tensors = self
            .params
            .into_iter()
            .map(|p| {
                let t = Tensor::new(p.shape, p.values).map_err(|e| {
                    slfnet_core::Error::Data(format!("parameter {:?}: {e}", p.name))
                })?;
                Ok((p.name, t))
            })
            .collect::<slfnet_core::Result<Vec<_>>>()?;
        Model::from_parts(self.config, vocab, tensors)
    }
}

pub fn save_checkpoint(path: &Path, model: &Model) -> IoResult<()> {
    let mut bytes = serde_json::to_vec(&Checkpoint::from_model(model))
        .map_err(|e| IoError::format(path, e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| IoError::file(path, e))
}

pub fn load_checkpoint(path: &Path) -> IoResult<Model> {
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let ck: Checkpoint =
        serde_json::from_str(&text).map_err(|e| IoError::format(path, e.to_string()))?;
    ck.into_model()
        .map_err(|e| IoError::format(path, e.to_string()))
}
