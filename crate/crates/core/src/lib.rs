//! Desk-scale RFID ripening-room monitoring.
//!
//! A simulated trolley of 128 fruits, each sensed by three passive UHF
//! tags, feeds a machine-learning pipeline that classifies every fruit's
//! ripening stage: AUC-ranked feature selection, RBF-kernel SVMs trained
//! by sequential minimal optimization, OR-fusion of the basal and
//! eccentric tag models, monotonic enforcement and leave-one-fruit-out
//! evaluation.

pub mod classifier;
pub mod commands;
pub mod config;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod selection;
pub mod svm;
pub mod interrogation;
pub mod seed;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
