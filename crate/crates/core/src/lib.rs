//! Framewise emotion recognition from audio (and other per-frame modalities).
//!
//! The pipeline turns raw audio into a sequence of 3×40×40 spectrogram
//! frames at 5 Hz ([`audio`]), runs a small convolutional encoder and an
//! LSTM over each 2 s interval ([`model`]), optionally trains it with a CTC
//! objective over the patterns `E`, `-E`, `E-`, `-E-` ([`ctc`]), fuses
//! per-modality interval embeddings at decision level ([`fusion`]) and
//! scores utterance predictions with the usual challenge metrics
//! ([`metrics`]).

pub mod audio;
pub mod checkpoint;
pub mod ctc;
mod error;
pub mod fusion;
pub mod metrics;
pub mod model;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};

/// The seven emotion categories, in label-index order.
pub const EMOTIONS: [&str; 7] = ["anger", "disgust", "fear", "happy", "neutral", "sad", "surprise"];

/// Index of `name` in [`EMOTIONS`].
pub fn emotion_index(name: &str) -> Option<usize> {
    EMOTIONS.iter().position(|e| *e == name)
}
