//! Federated intrusion detection over NetFlow records and provenance graphs,
//! with Shapley-value explanations and a penultimate-layer decision-quality check.

pub mod detectors;
pub mod error;
pub mod explain;
pub mod federated;
pub mod fsutil;
pub mod netflow;
pub mod nn;
pub mod provenance;
pub mod quality;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
