//! Core algorithms for benchmarking energy-expenditure (EE) regression from
//! wearable biosignals.
//!
//! The crate is IO-free and `no_std`-compatible (`alloc` required): it covers
//! the signal catalog, metabolic ground-truth derivation, window fusion, a
//! six-family model zoo with hand-rolled forward/backward passes, Adam
//! training, leave-one-subject-out evaluation, and a deterministic synthetic
//! dataset generator. File formats, the CLI, and plotting live in the
//! companion `eebench` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod catalog;
pub mod dataset;
pub mod error;
pub mod eval;
mod math;
pub mod model;
pub mod nn;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod windowing;

pub use error::{Error, Result};
