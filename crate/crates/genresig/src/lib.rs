//! File formats, dataset handling and the command line for the
//! `genresig-core` genre classifier.
//!
//! The `genresig` binary chains everything: `synth` or a GTZAN-layout WAV
//! tree, `prepare` (spectrogram cache), `train` (cross-validation and
//! checkpoints), then `signatures`, `pca`, `equations`, `neighbors`,
//! `recommend` and `attention` over a training run.

pub mod cache;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
mod error;
pub mod report;
pub mod synth;
pub mod wav;

pub use error::{Error, Result};
