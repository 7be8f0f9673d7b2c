//! Separability analysis for skeleton-based video anomaly detection datasets.
//!
//! Tracklets are cut into fixed-length feature windows, summarized by
//! per-split mean tensors, and compared with the signed difference of
//! means (S-DoM). Frame-level detector scores are evaluated with AUC-ROC,
//! AUC-PR and EER.

pub mod analysis;
pub mod error;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod stats;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
