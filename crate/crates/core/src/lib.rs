//! Streaming multi-person pose estimation engine.
//!
//! Frames flow through a static chain of operators (decode, resize, infer,
//! parse, visualize) connected by bounded channels. The inference stage
//! batches adaptively when it becomes the bottleneck. Poses are recovered from
//! confidence and part-affinity maps by [`parser::paf`].

pub mod backend;
pub mod bench;
pub mod clock;
pub mod config;
pub mod dataflow;
pub mod error;
pub mod eval;
pub mod image;
pub mod operators;
pub mod oracle;
pub mod parser;
pub mod pose;
pub mod scheduler;
pub mod selftest;
pub mod synth;
pub mod tensor;
pub mod topology;

pub use config::PipelineConfig;
pub use error::{Error, Result};
