//! Card-sorting experiments with EEG/ERP analysis.
//!
//! The crate covers the task engine ([`task`]), closed-loop agents
//! ([`agents`]), behavioral metrics ([`metrics`]), BrainVision-style I/O
//! ([`eeg_io`]), preprocessing ([`signal`]), ERP statistics ([`erp`]) and a
//! synthetic ground-truth generator ([`synth`]).
//!
//! Numeric code is generic over [`Real`]; the aliases below fix the scalar
//! to `f64` (analysis default) or `f32` (storage precision).

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod eeg_io;
pub mod erp;
pub mod metrics;
pub mod num;
pub mod render;
pub mod signal;
pub mod synth;
pub mod task;

pub use num::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Analysis-precision recording.
pub type Recording64 = eeg_io::Recording<f64>;
/// Storage-precision recording (BrainVision float32 data).
pub type Recording32 = eeg_io::Recording<f32>;
pub type EpochSet64 = erp::EpochSet<f64>;
pub type ConditionAverage64 = erp::ConditionAverage<f64>;
pub type Synthesized64 = synth::Synthesized<f64>;
pub type Synthesized32 = synth::Synthesized<f32>;
