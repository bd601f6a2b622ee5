//! Harmonic/percussive source separation and the two-stream features.
//!
//! The four-step pipeline: STFT, median filtering (horizontal to enhance
//! harmonic structure, vertical to enhance percussive structure), binary
//! masking of the original STFT, and log-mel projection of each masked
//! component. It runs twice per clip with different analysis windows: a
//! short time-biased window for the harmonic feature (80 x 500) and a 1 s
//! frequency-biased window for the percussive feature (256 x 20).

mod feature_io;

pub use feature_io::{read_feature, write_feature, FEATURE_FORMAT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::dsp::{
    mel_filterbank, mel_log, median_filter_2d, power, stft, ComplexGrid, DspError, Mat, MelBank,
    PowerGrid, StftConfig,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("{what}: shape ({got_rows}, {got_cols}) does not match ({want_rows}, {want_cols})")]
    ShapeMismatch {
        what: &'static str,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("{bias:?} feature has {got} frames, need {want} to crop")]
    ShortFeature { bias: Bias, got: usize, want: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: feature file version {got}, this build reads {want}")]
    VersionMismatch { path: String, got: u32, want: u32 },
    #[error("{path}: corrupt feature file: {reason}")]
    CorruptFile { path: String, reason: String },
}

/// Which analysis window produced a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    TimeBiased,
    FrequencyBiased,
}

/// Which masked component a feature was projected from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Harmonic,
    Percussive,
}

/// Complementary binary masks over an STFT grid. Entries are exactly 0 or 1
/// and `harmonic + percussive == 1` cell-wise by construction.
#[derive(Debug, Clone)]
pub struct BinaryMaskPair {
    pub harmonic: Mat,
    pub percussive: Mat,
}

/// A log-mel feature matrix in dB, `n_mels x frames`, values in `[-80, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    pub bias: Bias,
    pub component: Component,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>, bias: Bias, component: Component) -> Self {
        assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            values,
            bias,
            component,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }
}

/// Both features of one clip, plus bookkeeping for training.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePair {
    pub harmonic: FeatureMatrix,
    pub percussive: FeatureMatrix,
    pub label: Option<String>,
    pub clip_id: String,
}

impl FeaturePair {
    /// Cache file name for this pair: `<clip_id>.feat`.
    pub fn file_name(&self) -> String {
        format!("{}.feat", self.clip_id)
    }
}

/// Parameters of the whole feature-extraction stage. The defaults are the
/// production configuration: 48 kHz 10 s clips, a 2048/960 time-biased
/// window with 80 mel bands cropped to 500 frames, and a 48000/24000
/// frequency-biased window (zero-padded to a 65536 FFT) with 256 mel bands
/// cropped to 20 frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub clip_seconds: f64,
    /// Accepted deviation from the nominal clip length, in samples.
    pub duration_tolerance: usize,
    pub time_biased: StftConfig,
    pub frequency_biased: StftConfig,
    pub harmonic_mels: usize,
    pub percussive_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Horizontal (along-time) median kernel enhancing harmonic structure.
    pub harmonic_kernel: (usize, usize),
    /// Vertical (along-frequency) median kernel enhancing percussive structure.
    pub percussive_kernel: (usize, usize),
    pub power_exponent: f64,
    pub db_floor: f64,
    /// Frame counts the features are cropped to.
    pub harmonic_frames: usize,
    pub percussive_frames: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000,
            clip_seconds: 10.0,
            duration_tolerance: 480,
            time_biased: StftConfig::new(2048, 960, 2048),
            frequency_biased: StftConfig::new(48_000, 24_000, 65_536),
            harmonic_mels: 80,
            percussive_mels: 256,
            f_min: 0.0,
            f_max: 24_000.0,
            harmonic_kernel: (1, 31),
            percussive_kernel: (31, 1),
            power_exponent: 2.0,
            db_floor: 1e-10,
            harmonic_frames: 500,
            percussive_frames: 20,
        }
    }
}

/// Build the complementary masks: compare the horizontally median-filtered
/// grid (harmonic-enhanced) against the vertically filtered one
/// (percussive-enhanced) and assign each cell to the larger side. Ties go
/// to harmonic.
pub fn hpss_masks(
    grid: &PowerGrid,
    harmonic_kernel: (usize, usize),
    percussive_kernel: (usize, usize),
) -> BinaryMaskPair {
    let h_enhanced = median_filter_2d(grid, harmonic_kernel.0, harmonic_kernel.1);
    let p_enhanced = median_filter_2d(grid, percussive_kernel.0, percussive_kernel.1);

    let mut harmonic = Mat::zeros(grid.bins(), grid.frames());
    let mut percussive = Mat::zeros(grid.bins(), grid.frames());
    let h_out = harmonic.as_mut_slice();
    let p_out = percussive.as_mut_slice();
    for (i, (&h, &p)) in h_enhanced
        .values
        .as_slice()
        .iter()
        .zip(p_enhanced.values.as_slice())
        .enumerate()
    {
        if h >= p {
            h_out[i] = 1.0;
        } else {
            p_out[i] = 1.0;
        }
    }
    BinaryMaskPair {
        harmonic,
        percussive,
    }
}

/// Apply the masks to the original STFT. Because the masks are binary
/// complements, the two outputs sum to the input exactly.
pub fn hpss_split(
    grid: &ComplexGrid,
    masks: &BinaryMaskPair,
) -> Result<(ComplexGrid, ComplexGrid), FeatureError> {
    if masks.harmonic.rows() != grid.bins() || masks.harmonic.cols() != grid.frames() {
        return Err(FeatureError::ShapeMismatch {
            what: "mask vs stft",
            got_rows: masks.harmonic.rows(),
            got_cols: masks.harmonic.cols(),
            want_rows: grid.bins(),
            want_cols: grid.frames(),
        });
    }
    let mut harmonic = grid.clone();
    let mut percussive = grid.clone();
    for ((h, p), (&mh, &mp)) in harmonic
        .as_mut_slice()
        .iter_mut()
        .zip(percussive.as_mut_slice())
        .zip(
            masks
                .harmonic
                .as_slice()
                .iter()
                .zip(masks.percussive.as_slice()),
        )
    {
        *h *= mh;
        *p *= mp;
    }
    Ok((harmonic, percussive))
}

/// Fraction of total spectral power routed to (harmonic, percussive) for a
/// clip under one STFT configuration. Diagnostic for mask orientation.
pub fn power_routing(
    clip: &AudioClip,
    cfg: &StftConfig,
    harmonic_kernel: (usize, usize),
    percussive_kernel: (usize, usize),
    exponent: f64,
) -> Result<(f64, f64), FeatureError> {
    let grid = stft(clip, cfg)?;
    let pg = power(&grid, exponent);
    let masks = hpss_masks(&pg, harmonic_kernel, percussive_kernel);
    let mut total = 0.0;
    let mut harmonic = 0.0;
    for (&p, &mh) in pg.values.as_slice().iter().zip(masks.harmonic.as_slice()) {
        total += p;
        harmonic += p * mh;
    }
    if total == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((harmonic / total, (total - harmonic) / total))
}

/// Feature extractor with prebuilt mel banks. Construction is the expensive
/// part (the frequency-biased bank spans 32769 bins); one extractor is meant
/// to be shared across clips and threads.
pub struct FeatureExtractor {
    config: DspConfig,
    harmonic_bank: MelBank,
    percussive_bank: MelBank,
}

impl FeatureExtractor {
    pub fn new(config: &DspConfig) -> Result<Self, FeatureError> {
        config.time_biased.validate()?;
        config.frequency_biased.validate()?;
        let harmonic_bank = mel_filterbank(
            config.harmonic_mels,
            &config.time_biased,
            config.sample_rate,
            config.f_min,
            config.f_max,
        )?;
        let percussive_bank = mel_filterbank(
            config.percussive_mels,
            &config.frequency_biased,
            config.sample_rate,
            config.f_min,
            config.f_max,
        )?;
        Ok(Self {
            config: config.clone(),
            harmonic_bank,
            percussive_bank,
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.config
    }

    pub fn harmonic_bank(&self) -> &MelBank {
        &self.harmonic_bank
    }

    pub fn percussive_bank(&self) -> &MelBank {
        &self.percussive_bank
    }

    /// Time-biased HPSS, harmonic branch, 80-band log-mel, crop to 500 frames.
    pub fn extract_harmonic_feature(&self, clip: &AudioClip) -> Result<FeatureMatrix, FeatureError> {
        self.extract(
            clip,
            &self.config.time_biased,
            &self.harmonic_bank,
            Component::Harmonic,
            Bias::TimeBiased,
            self.config.harmonic_frames,
        )
    }

    /// Frequency-biased HPSS, percussive branch, 256-band log-mel, crop to
    /// 20 frames.
    pub fn extract_percussive_feature(
        &self,
        clip: &AudioClip,
    ) -> Result<FeatureMatrix, FeatureError> {
        self.extract(
            clip,
            &self.config.frequency_biased,
            &self.percussive_bank,
            Component::Percussive,
            Bias::FrequencyBiased,
            self.config.percussive_frames,
        )
    }

    /// Both features of one clip.
    pub fn extract_pair(
        &self,
        clip: &AudioClip,
        clip_id: &str,
        label: Option<&str>,
    ) -> Result<FeaturePair, FeatureError> {
        Ok(FeaturePair {
            harmonic: self.extract_harmonic_feature(clip)?,
            percussive: self.extract_percussive_feature(clip)?,
            label: label.map(str::to_string),
            clip_id: clip_id.to_string(),
        })
    }

    fn extract(
        &self,
        clip: &AudioClip,
        stft_cfg: &StftConfig,
        bank: &MelBank,
        component: Component,
        bias: Bias,
        crop_frames: usize,
    ) -> Result<FeatureMatrix, FeatureError> {
        let grid = stft(clip, stft_cfg)?;
        let pg = power(&grid, self.config.power_exponent);
        let masks = hpss_masks(&pg, self.config.harmonic_kernel, self.config.percussive_kernel);
        let (harmonic, percussive) = hpss_split(&grid, &masks)?;
        let picked = match component {
            Component::Harmonic => harmonic,
            Component::Percussive => percussive,
        };
        let picked_power = power(&picked, self.config.power_exponent);
        let db = mel_log(&picked_power, bank, self.config.db_floor)?;

        if db.cols() < crop_frames {
            return Err(FeatureError::ShortFeature {
                bias,
                got: db.cols(),
                want: crop_frames,
            });
        }
        let rows = db.rows();
        let mut values = Vec::with_capacity(rows * crop_frames);
        for r in 0..rows {
            values.extend(db.row(r)[..crop_frames].iter().map(|&v| v as f32));
        }
        Ok(FeatureMatrix::new(rows, crop_frames, values, bias, component))
    }
}
