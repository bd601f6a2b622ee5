//! Train placeholder.
use thiserror::Error;
#[derive(Debug, Error)]
pub enum TrainError { #[error("placeholder")] Placeholder }
pub struct DatasetManifest;
pub struct Metrics;
pub struct Scene;
pub struct TrainConfig;
pub struct TrainHistory;
