//! Score-free per-note pitch correction.
//!
//! A CNN+GRU regressor reads the constant-Q spectrograms of a vocal and its
//! accompaniment and predicts one constant pitch shift per sung note. The
//! crate covers the whole loop: signal analysis, synthetic training data,
//! the network and its optimizer, time-domain correction, and the CLI
//! workflows built on top.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod cqt;
pub mod datagen;
pub mod error;
pub mod features;
pub mod nn;
pub mod pipeline;
pub mod pitch;
pub mod psola;
pub mod render;

pub use error::{Error, Result};
