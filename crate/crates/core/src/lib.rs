//! Anomaly-aware semantic segmentation at desk scale.
//!
//! The pipeline: generate a synthetic driving corpus ([`synth`]), train a
//! small segmenter ([`segnet`]), fine-tune only its classification head with
//! style-aligned copy-pasted outliers ([`augment`]) under a top-K
//! one-vs-rest loss ([`oodloss`]), then score pixels ([`scores`]) and
//! evaluate anomaly segmentation ([`metrics`]).

pub mod augment;
pub mod error;
pub mod imagery;
pub mod metrics;
pub mod numeric;
pub mod oodloss;
pub mod pipeline;
pub mod scores;
pub mod segnet;
pub mod synth;

pub use error::{Error, Result};
pub use imagery::{Image, LabelMap, LogitMap, ScoreMap, SegSample, IGNORE_ID, OOD_ID};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
