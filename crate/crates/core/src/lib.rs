//! Unsupervised detection of relapse days from wearable biosignals.
//!
//! The pipeline runs raw per-subject streams through Hampel cleaning,
//! 5-minute feature extraction (activity energy, heart rate, HRV band
//! powers, time-of-day encoding, step statistics), matrix construction at
//! several resolutions, and Isolation Forest novelty scoring. Days are ranked
//! by anomaly score and evaluated with ROC-AUC / PR-AUC.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod iforest;
pub mod ingest;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
