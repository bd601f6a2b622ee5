//! Two-stream acoustic scene classification.
//!
//! The pipeline decodes 10 s / 48 kHz clips, splits them into harmonic and
//! percussive components with median-filtering HPSS (run twice, once with a
//! short time-biased analysis window and once with a 1 s frequency-biased
//! window), projects each component onto a log-mel grid, and classifies the
//! resulting (80x500, 256x20) feature pair with two inception-style CNN
//! streams fused by bilinear pooling.
//!
//! Modules follow the pipeline order:
//!
//! - [`audio`]: WAV decoding, mono fold-down, clip validation
//! - [`dsp`]: STFT, 2-D median filtering, mel filterbanks, dB compression
//! - [`hpss`]: binary-mask source separation and the feature extractors
//! - [`nn`]: tensors, layers, exact gradients, Adam
//! - [`model`]: the two CNN streams, bilinear pooling, weight files
//! - [`train`]: manifests, splits, the training protocol, evaluation
//! - [`config`]: the single JSON configuration that reproduces a run

pub mod audio;
pub mod config;
pub mod dsp;
pub mod hpss;
pub mod model;
pub mod nn;
pub mod train;

mod fileio;

pub use audio::{AudioClip, AudioError, MultiChannelClip};
pub use config::{DspConfig, PipelineConfig};
pub use dsp::{ComplexGrid, DspError, MelBank, PowerGrid, StftConfig};
pub use hpss::{Bias, BinaryMaskPair, Component, FeatureError, FeatureMatrix, FeaturePair};
pub use model::{ArchitectureSpec, BcnnModel, ModelError, StreamSpec};
pub use nn::{NnError, Tensor};
pub use train::{DatasetManifest, Metrics, Scene, TrainConfig, TrainError, TrainHistory};
