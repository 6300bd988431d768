//! Operational shell around `wcst-core`: configuration, the HTTP session
//! service, batch simulation, the EEG analysis pipeline and synthetic
//! datasets.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod config;
pub mod fixture;
pub mod par;
pub mod pipeline;
pub mod seeds;
pub mod service;

pub use batch::{run_batch, BatchReport};
pub use config::{LabConfig, PipelineConfig};
pub use pipeline::{run_pipeline, PipelineError, PipelineOutputs};
