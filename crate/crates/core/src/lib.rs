//! Synthetic visual question answering data pipeline: corpus assembly,
//! level-scheduled generation, ensemble quality control, balancing and
//! evaluation.

pub mod balance;
pub mod corpus;
pub mod gateway;
pub mod generation;
pub mod jsonl;
pub mod metrics;
pub mod scheduler;
pub mod text;
pub mod validation;
