//! Voice biomarker extraction toolkit.
//!
//! The library recovers glottal flow from sustained-vowel recordings by
//! inverse filtering, fits physical vocal-fold oscillator models to it with
//! exact discrete-adjoint gradients, and summarizes the fitted trajectories
//! as phase-space features. Two further feature families complement the
//! model route: per-frame classifier scores acting as proxy measurements,
//! and latent codes from a small encoder/decoder trained with a
//! reconstruction plus discriminability objective.

pub mod adles;
pub mod audio;
pub mod dsp;
pub mod error;
pub mod fold;
pub mod matrix;
pub mod phase;

pub use audio::{frame, preemphasis, read_wav, resample, AudioBuffer, FrameSet};
pub use dsp::GlottalFlowSignal;
pub use error::{Error, Result};
pub use fold::{OneMassParams, TrajectorySet, TwoMassParams};
pub use matrix::Matrix;
