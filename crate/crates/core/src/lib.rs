//! Deterministic building blocks for a cascaded speech-to-speech translation
//! system: audio I/O and spectral transforms, voice activity detection,
//! Wiener enhancement, training-data augmentation, text normalization, ROVER
//! hypothesis fusion, evaluation metrics, and a pipeline orchestrator with
//! pluggable model adapters.

pub mod adapters;
pub mod audio;
pub mod augment;
pub mod enhance;
pub mod error;
pub mod fusion;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod signal;
pub mod textnorm;
pub mod vad;
mod util;

pub use error::{Error, Result};
pub use util::{audio_fingerprint, rng_for};
