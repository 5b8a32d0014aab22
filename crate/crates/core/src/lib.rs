//! Music genre classification with inter-genre similarity (IGS) modelling.
//!
//! The pipeline runs in five stages:
//!
//! - [`audio_io`]: WAV decoding, the labeled corpus manifest and its two-fold split.
//! - [`dsp`]: 17-dimensional timbral texture vectors (13 MFCCs, zero-crossing rate,
//!   spectral centroid, roll-off and flux) on 25 ms Hamming windows every 10 ms.
//! - [`gmm`]: diagonal-covariance Gaussian mixtures trained with EM.
//! - [`igs`]: the flat, IGS, iterative IGS and score-modelling IGS classifiers, all
//!   deciding by a weighted mean of frame log-likelihoods over a decision window.
//! - [`eval`]: decision windows, two-fold cross validation, confusion matrices and
//!   a seeded synthetic corpus for desk-scale experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio_io;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod gmm;
pub mod igs;
mod rng;

pub use error::{Error, Result};
