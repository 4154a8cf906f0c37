//! Zero-day intrusion detection from benign traffic only.
//!
//! Detectors are fitted on benign flow features and every attack class is
//! treated as previously unseen:
//!
//! * [`dataset`] reads feature CSVs, one-hot encodes categorical columns and
//!   splits benign rows 75/25 into training and validation parts.
//! * [`preprocess`] drops highly correlated features and standardizes, using
//!   benign statistics only.
//! * [`autoencoder`] flags rows whose reconstruction error exceeds a threshold.
//! * [`ocsvm`] flags rows outside a one-class SVM boundary.
//! * [`eval`] sweeps thresholds / ν and reports benign specificity and
//!   per-class recall.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod ocsvm;
pub mod preprocess;
pub mod seed;

pub use error::{Error, Result};
pub use fingerprint::Fingerprint;
