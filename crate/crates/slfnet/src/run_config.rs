//! Run configuration file: training and grammar settings plus optional paths.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slfnet_core::synth::GrammarConfig;
use slfnet_core::TrainConfig;

use crate::error::{IoError, IoResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Pretrained word vectors used to initialize the embedding table.
    pub embeddings: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub train: TrainConfig,
    pub grammar: GrammarConfig,
    pub paths: Paths,
}

impl RunConfigFile {
    /// Parse strictly, validate both sections and check that referenced files exist.
    pub fn load(path: &Path) -> IoResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
        let cfg: RunConfigFile =
            serde_json::from_str(&text).map_err(|e| IoError::format(path, e.to_string()))?;
        cfg.train.validate()?;
        cfg.grammar.validate()?;
        if let Some(p) = &cfg.paths.embeddings {
            if !p.is_file() {
                return Err(IoError::format(
                    path,
                    format!("paths.embeddings {} is not a readable file", p.display()),
                ));
            }
        }
        Ok(cfg)
    }

    /// Like [`RunConfigFile::load`], or the defaults when no file is given.
    pub fn load_or_default(path: Option<&Path>) -> IoResult<Self> {
        path.map_or_else(|| Ok(RunConfigFile::default()), RunConfigFile::load)
    }
}
