//! File formats, checkpoints and the `slfnet` command line on top of
//! [`slfnet_core`].

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod run_config;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use dataset::{load_dataset, parse_dataset, save_dataset, write_dataset};
pub use embeddings::{load_pretrained_embeddings, EmbeddingReport};
pub use error::{IoError, IoResult};
pub use run_config::RunConfigFile;
pub use slfnet_core;
