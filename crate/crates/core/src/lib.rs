//! Early-warning score protocols and machine-learning deterioration
//! models over longitudinal vital signs: ingestion, windowing,
//! imputation, six classifiers, validation schemes, explanations and live
//! scoring.

pub mod deploy;
pub mod error;
pub mod eval;
pub mod ews;
pub mod explain;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod synth;

pub use deploy::{LiveAssessment, ModelBundle, BUNDLE_FORMAT};
pub use error::{Error, Result};
pub use eval::{EvalOptions, EvalReport, SchemeResult, Scorer};
pub use ews::{EwsResult, Protocol, Vitals};
pub use explain::{AlertExplanation, ImportanceReport, NormalRanges};
pub use ingest::{
    ColumnMapping, Encounter, EncounterMeta, Observation, PlausibilityBounds, Sex, VitalKind,
};
pub use models::{Algorithm, ClassifierSpec, TrainedModel};
pub use pipeline::{prepare, PrepareOptions, PrepareReport, Prepared};
pub use preprocess::{CategoryEncoding, FeatureMatrix, FeatureWindow, WindowConfig};
