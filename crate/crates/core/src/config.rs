//! Config placeholder.
pub use crate::hpss::DspConfig;
pub struct PipelineConfig;
