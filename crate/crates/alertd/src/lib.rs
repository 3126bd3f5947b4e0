//! Streaming scoring of vital-sign events with MEWS/NEWS2 and a trained
//! bundle; emits explained, deduplicated alerts.

pub mod engine;
pub mod error;
pub mod log;
pub mod message;

pub use engine::{AlertEvent, Census, CensusEntry, Engine, EngineConfig, EwsSummary, Outcome};
pub use error::{AlertError, AlertResult};
pub use log::encounters_to_log;
pub use message::{BundleEvent, Message, ObservationEvent, Registration};
