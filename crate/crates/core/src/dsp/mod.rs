//! STFT, 2-D median filtering, and mel/log compression.
//!
//! These are the primitives the HPSS feature pipeline composes. Everything
//! here is a pure function over immutable inputs; grids carry their STFT
//! configuration and sample rate so downstream stages can validate shapes.

mod median;
mod mel;
mod stft;

pub use median::median_filter_2d;
pub use mel::{hz_to_mel, mel_filterbank, mel_log, mel_to_hz, MelBank};
pub use stft::{hann_window, stft};

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// dB clamp applied after peak-referencing in [`mel_log`]; features live in
/// `[-DB_RANGE, 0]`.
pub const DB_RANGE: f64 = 80.0;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("window length {0} is too small (need at least 2)")]
    LengthTooSmall(usize),
    #[error("clip has {len} samples, shorter than the {window}-sample window (center=false)")]
    ClipShorterThanWindow { len: usize, window: usize },
    #[error("invalid STFT config: {0}")]
    InvalidConfig(String),
    #[error("mel bank covers {bank_bins} bins but grid has {grid_bins}")]
    BinMismatch { bank_bins: usize, grid_bins: usize },
    #[error("mel band {band} has no positive weight (adjacent band edges collapse onto one FFT bin)")]
    DegenerateBand { band: usize },
    #[error("invalid mel band range: f_min {f_min} Hz, f_max {f_max} Hz, nyquist {nyquist} Hz")]
    InvalidBandRange {
        f_min: f64,
        f_max: f64,
        nyquist: f64,
    },
}

/// Analysis window configuration for [`stft`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    /// Analysis window length in samples.
    pub window_len: usize,
    /// Hop between consecutive frames in samples.
    pub hop_len: usize,
    /// FFT length; the window is zero-padded up to this. Power of two.
    pub fft_len: usize,
    /// Reflect-pad the signal by `fft_len / 2` at both ends so frame `t`
    /// is centered on sample `t * hop_len`.
    pub center: bool,
}

impl StftConfig {
    pub fn new(window_len: usize, hop_len: usize, fft_len: usize) -> Self {
        Self {
            window_len,
            hop_len,
            fft_len,
            center: true,
        }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.window_len < 2 {
            return Err(DspError::LengthTooSmall(self.window_len));
        }
        if self.hop_len == 0 {
            return Err(DspError::InvalidConfig("hop_len must be >= 1".into()));
        }
        if self.fft_len < self.window_len {
            return Err(DspError::InvalidConfig(format!(
                "fft_len {} < window_len {}",
                self.fft_len, self.window_len
            )));
        }
        if !self.fft_len.is_power_of_two() {
            return Err(DspError::InvalidConfig(format!(
                "fft_len {} is not a power of two",
                self.fft_len
            )));
        }
        Ok(())
    }

    /// Retained spectrum bins: `fft_len / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Complex STFT output, `bins x frames`.
#[derive(Debug, Clone)]
pub struct ComplexGrid {
    bins: usize,
    frames: usize,
    data: Vec<Complex<f64>>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl ComplexGrid {
    pub fn zeros(bins: usize, frames: usize, config: StftConfig, sample_rate: u32) -> Self {
        Self {
            bins,
            frames,
            data: vec![Complex::new(0.0, 0.0); bins * frames],
            config,
            sample_rate,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn at(&self, bin: usize, frame: usize) -> Complex<f64> {
        self.data[bin * self.frames + frame]
    }

    #[inline]
    pub fn at_mut(&mut self, bin: usize, frame: usize) -> &mut Complex<f64> {
        &mut self.data[bin * self.frames + frame]
    }

    pub fn as_slice(&self) -> &[Complex<f64>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<f64>] {
        &mut self.data
    }
}

/// Nonnegative magnitude-power grid with the metadata of its source STFT.
#[derive(Debug, Clone)]
pub struct PowerGrid {
    pub values: Mat,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl PowerGrid {
    pub fn bins(&self) -> usize {
        self.values.rows()
    }

    pub fn frames(&self) -> usize {
        self.values.cols()
    }
}

/// Entry-wise `|z|^exponent` of an STFT grid. The pipeline uses exponent 2.
pub fn power(grid: &ComplexGrid, exponent: f64) -> PowerGrid {
    assert!(exponent > 0.0, "power exponent must be positive");
    let mut values = Mat::zeros(grid.bins(), grid.frames());
    let out = values.as_mut_slice();
    if exponent == 2.0 {
        for (o, z) in out.iter_mut().zip(grid.as_slice()) {
            *o = z.norm_sqr();
        }
    } else if exponent == 1.0 {
        for (o, z) in out.iter_mut().zip(grid.as_slice()) {
            *o = z.norm();
        }
    } else {
        for (o, z) in out.iter_mut().zip(grid.as_slice()) {
            *o = z.norm().powf(exponent);
        }
    }
    PowerGrid {
        values,
        config: grid.config,
        sample_rate: grid.sample_rate,
    }
}
