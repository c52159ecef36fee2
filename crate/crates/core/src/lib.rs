//! Core numerics for attention-pooled spectrogram genre classification.
//!
//! Everything here is `no_std` + `alloc`: the dense tensor engine with
//! reverse-mode differentiation, the STFT/tokenizer feature path, the
//! CNN + multi-head attention genre model, the cross-validated trainer,
//! attention-weighted track signatures, and the embedding analytics
//! (PCA, genre equations, nearest neighbors, recommendation).
//!
//! File formats, WAV decoding and the command line live in the `genresig`
//! companion crate. Enable the `parallel` feature to spread mini-batch
//! gradient computation across a rayon pool; results are bitwise identical
//! to the sequential path.
#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod analysis;
pub mod audio;
pub mod diagnostics;
mod error;
pub mod model;
pub mod signatures;
pub mod spectral;
pub mod tensor;
pub mod tokens;
pub mod training;

pub use error::{Error, Result};
pub use model::{ForwardOutput, ModelConfig, ModelParams};
pub use tensor::{Graph, NodeId, Parameter, Tensor};
