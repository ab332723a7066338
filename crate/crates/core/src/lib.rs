//! Query-log mining toolkit for product search intents.
//!
//! The crate covers the offline pipeline: parsing query logs into sessions,
//! wordpiece tokenization and embeddings, distant-supervision labeling of
//! product queries, a small classifier zoo with cross-validation, LDA topic
//! clustering for annotation sampling, intent feature extraction, session
//! level intent analytics, and a synthetic log generator with planted truth.

pub mod analysis;
pub mod features;
pub mod learners;
pub mod log;
pub mod supervision;
pub mod syngen;
pub mod text;
pub mod topics;
