//! Architecture configuration for the two CNN streams.
//!
//! The defaults reproduce the production configuration: ten parallel
//! horizontal-filter branches for the harmonic stream and ten vertical
//! ones for the percussive stream, each branch conv+BN+ReLU, concatenated
//! depth-wise, then a second conv block and max pooling down to 250
//! spatial positions of 256 channels per stream.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::PoolSpec;

/// One inception-style branch: `filters` kernels of size `kernel` (h, w).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub filters: usize,
    pub kernel: (usize, usize),
}

impl BranchSpec {
    pub const fn new(filters: usize, kernel: (usize, usize)) -> Self {
        Self { filters, kernel }
    }
}

/// One stream: parallel branches, depth concat, optional pool, a second
/// conv block, and a final pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    /// Input feature dims (mel bands, frames).
    pub input: (usize, usize),
    pub branches: Vec<BranchSpec>,
    pub pool_after_concat: Option<PoolSpec>,
    pub conv2: BranchSpec,
    pub pool_after_conv2: PoolSpec,
}

impl StreamSpec {
    /// Harmonic stream defaults: 80 x 500 input, horizontal (1 x m) branches.
    pub fn harmonic_default() -> Self {
        Self {
            input: (80, 500),
            branches: vec![
                BranchSpec::new(16, (1, 6)),
                BranchSpec::new(16, (1, 26)),
                BranchSpec::new(16, (1, 50)),
                BranchSpec::new(16, (1, 76)),
                BranchSpec::new(8, (1, 96)),
                BranchSpec::new(8, (1, 120)),
                BranchSpec::new(8, (1, 146)),
                BranchSpec::new(8, (1, 170)),
                BranchSpec::new(8, (1, 196)),
                BranchSpec::new(8, (1, 220)),
            ],
            pool_after_concat: Some(PoolSpec::with_stride_equal_pool(4, 10)),
            conv2: BranchSpec::new(256, (7, 7)),
            pool_after_conv2: PoolSpec::with_stride_equal_pool(2, 2),
        }
    }

    /// Percussive stream defaults: 256 x 20 input, vertical (n x 1) branches.
    pub fn percussive_default() -> Self {
        Self {
            input: (256, 20),
            branches: vec![
                BranchSpec::new(32, (10, 1)),
                BranchSpec::new(32, (25, 1)),
                BranchSpec::new(32, (42, 1)),
                BranchSpec::new(16, (70, 1)),
                BranchSpec::new(16, (100, 1)),
                BranchSpec::new(16, (110, 1)),
                BranchSpec::new(16, (120, 1)),
                BranchSpec::new(16, (150, 1)),
                BranchSpec::new(16, (160, 1)),
                BranchSpec::new(16, (220, 1)),
            ],
            pool_after_concat: None,
            conv2: BranchSpec::new(256, (5, 5)),
            pool_after_conv2: PoolSpec::with_stride_equal_pool(10, 2),
        }
    }

    /// Channels after depth concatenation of all branches.
    pub fn concat_channels(&self) -> usize {
        self.branches.iter().map(|b| b.filters).sum()
    }

    /// Output dims (h, w, channels) after both conv stages and pools.
    pub fn output_dims(&self) -> Result<(usize, usize, usize), ModelError> {
        if self.branches.is_empty() {
            return Err(ModelError::InvalidSpec("a stream needs at least one branch".into()));
        }
        if self.branches.iter().any(|b| b.filters == 0 || b.kernel.0 == 0 || b.kernel.1 == 0)
            || self.conv2.filters == 0
        {
            return Err(ModelError::InvalidSpec("branch filters and kernels must be >= 1".into()));
        }
        let (mut h, mut w) = self.input;
        if h == 0 || w == 0 {
            return Err(ModelError::InvalidSpec("input dims must be >= 1".into()));
        }
        // Same-padded convs preserve the spatial dims.
        if let Some(pool) = &self.pool_after_concat {
            (h, w) = pool.output_dims(h, w)?;
        }
        (h, w) = self.pool_after_conv2.output_dims(h, w)?;
        Ok((h, w, self.conv2.filters))
    }
}

/// Derived dimensions shared by the model and its serializer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DerivedDims {
    pub harmonic_out: (usize, usize, usize),
    pub percussive_out: (usize, usize, usize),
    pub positions: usize,
    pub channels: usize,
    /// Classifier input width: channels squared.
    pub bilinear_dim: usize,
}

/// The whole two-stream architecture plus the classifier width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub harmonic: StreamSpec,
    pub percussive: StreamSpec,
    pub classes: usize,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self {
            harmonic: StreamSpec::harmonic_default(),
            percussive: StreamSpec::percussive_default(),
            classes: 10,
        }
    }
}

impl ArchitectureSpec {
    /// Check the two streams against each other: bilinear pooling needs
    /// equal channel counts and equal spatial position counts.
    pub fn validate(&self) -> Result<DerivedDims, ModelError> {
        if self.classes < 2 {
            return Err(ModelError::InvalidSpec("need at least two classes".into()));
        }
        let harmonic_out = self.harmonic.output_dims()?;
        let percussive_out = self.percussive.output_dims()?;
        let h_positions = harmonic_out.0 * harmonic_out.1;
        let p_positions = percussive_out.0 * percussive_out.1;
        if h_positions != p_positions {
            return Err(ModelError::PositionCountMismatch {
                harmonic: h_positions,
                percussive: p_positions,
            });
        }
        if harmonic_out.2 != percussive_out.2 {
            return Err(ModelError::ChannelMismatch {
                harmonic: harmonic_out.2,
                percussive: percussive_out.2,
            });
        }
        Ok(DerivedDims {
            harmonic_out,
            percussive_out,
            positions: h_positions,
            channels: harmonic_out.2,
            bilinear_dim: harmonic_out.2 * harmonic_out.2,
        })
    }

    /// A deliberately tiny two-branch configuration used by gradient checks
    /// and overfit tests: inputs 8 x 20 and 16 x 4, 8 channels, 10 positions.
    pub fn reduced(classes: usize) -> Self {
        Self {
            harmonic: StreamSpec {
                input: (8, 20),
                branches: vec![BranchSpec::new(3, (1, 3)), BranchSpec::new(3, (1, 5))],
                pool_after_concat: Some(PoolSpec::with_stride_equal_pool(2, 2)),
                conv2: BranchSpec::new(8, (3, 3)),
                pool_after_conv2: PoolSpec::with_stride_equal_pool(2, 2),
            },
            percussive: StreamSpec {
                input: (16, 4),
                branches: vec![BranchSpec::new(3, (3, 1)), BranchSpec::new(3, (5, 1))],
                pool_after_concat: None,
                conv2: BranchSpec::new(8, (3, 3)),
                pool_after_conv2: PoolSpec::with_stride_equal_pool(3, 2),
            },
            classes,
        }
    }
}
