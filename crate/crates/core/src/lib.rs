//! SLFNet core: a dependency-aware semantic parser that maps a tokenized
//! command to groups of (Action, Location, Object) slot spans.
//!
//! The crate is `no_std` and only needs an allocator. Everything numeric runs
//! through the [`tape::Graph`] reverse-mode tape in 64-bit floats. File
//! formats, checkpoints and the command-line tool live in the `slfnet` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attention;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoders;
pub mod error;
pub mod gradcheck;
pub mod heads;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use config::{AttentionMode, InteractionMode, TrainConfig};
pub use data::{NlcExample, SlfGroup, Span};
pub use decoder::{decode, render_slf, DecodeTrace, SlfParse};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use model::Model;
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Graph, Var};
pub use tensor::Tensor;
