//! Experiment harness library.

pub mod experiments;
pub mod metrics;
pub mod synth;
