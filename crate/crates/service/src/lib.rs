//! Pipeline orchestration over a run directory, and the review API.

pub mod api;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod review;
pub mod run;

pub use config::PipelineConfig;
pub use error::{ErrorEnvelope, ServiceError};
pub use run::{RunDir, Stage, StageStatus};
