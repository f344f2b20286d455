//! Eye-gaze variation estimation pipeline.
//!
//! Generates synthetic horizontal-EOG, neck-EMG and 9-axis IMU recordings of
//! gaze switches, preprocesses them (zero-phase filtering, resampling,
//! per-subject normalization), fuses IMU samples into a head-yaw trace with a
//! Madgwick filter, extracts hand-crafted features, and evaluates SVM / FCN /
//! LSTM / CNN classifiers with a repeated stratified-split harness.
//!
//! ```text
//! synthgen -> dsp -> fusion -> features -> ml -> harness -> report
//! ```
//!
//! Everything is deterministic given a master seed: random draws come from
//! counter-derived substreams, so datasets and evaluation reports are
//! bit-reproducible regardless of thread schedule.

pub mod dsp;
pub mod error;
pub mod features;
pub mod figures;
pub mod fusion;
pub mod harness;
pub mod io;
pub mod ml;
pub mod pipeline;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
