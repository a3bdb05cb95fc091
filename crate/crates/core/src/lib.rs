//! Probe-trajectory and signal-controller analytics.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod cli;
pub mod config;
pub mod detect;
pub mod geo;
pub mod ingest;
pub mod masks;
pub mod orchestrate;
pub mod signal;
pub mod simkit;
pub mod synth;
pub mod trajectory;
pub mod window;
