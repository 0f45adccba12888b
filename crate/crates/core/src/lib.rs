//! Blind room fingerprinting from reverberant speech.
//!
//! A recording is reduced to a per-band reverberation-time vector (a "roomprint") in four
//! stages: GMM-based channel log-magnitude estimation, minimum-phase filter fitting, impulse
//! response synthesis and fractional-octave decay analysis. Roomprints are then classified by
//! an RBF-kernel SVM.

pub mod audio;
pub mod channel;
pub mod classifier;
pub mod container;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod filter;
pub mod matrix;
pub mod pipeline;
pub mod roomprint;
pub mod speech_model;
pub mod synth;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
pub use matrix::Matrix;
