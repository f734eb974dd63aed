//! Multimodal late-fusion engine for affect prediction from precomputed
//! feature tracks.
//!
//! The crate is organised bottom-up:
//!
//! * [`featpack`] stores per-video, per-modality feature matrices on disk and
//!   aligns variable-rate tracks onto the video frame clock.
//! * [`neural`] holds the one-hidden-layer MLP heads, their losses, a
//!   deterministic mini-batch trainer and the logistic-regression gate.
//! * [`temporal`] contains the post-processing operators: box smoothing,
//!   blending, confidence filtering and STAT/mean pooling.
//! * [`pipeline`] wires the above into the expression (EXPR), mimicry
//!   intensity (EMI) and ambivalence/hesitancy (AH) tasks and their metrics.
//! * [`synth`] generates synthetic packs with controlled signal for tests and
//!   demonstrations.

pub mod error;
pub mod featpack;
pub mod neural;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
