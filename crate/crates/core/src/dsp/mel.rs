//! Slaney-style mel filterbanks and log compression.
//!
//! Triangles are placed on the Slaney mel scale (linear below 1 kHz,
//! logarithmic above) and area-normalized by `2 / width_hz`, matching the
//! defaults of the common audio-analysis stacks so spectra are comparable.

use serde::{Deserialize, Serialize};

use super::{DspError, Mat, PowerGrid, StftConfig, DB_RANGE};

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Hz to Slaney mel: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    } else {
        hz / F_SP
    }
}

/// Inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * ((mel - MIN_LOG_MEL) * log_step()).exp()
    } else {
        mel * F_SP
    }
}

/// Triangular mel filterbank, `n_mels x bins`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MelBank {
    weights_rows: usize,
    weights_cols: usize,
    weights: Vec<f64>,
    /// Per-row `[start, end)` of the nonzero span, for fast projection.
    support: Vec<(usize, usize)>,
    centers_hz: Vec<f64>,
    pub f_min: f64,
    pub f_max: f64,
}

impl MelBank {
    pub fn n_mels(&self) -> usize {
        self.weights_rows
    }

    pub fn bins(&self) -> usize {
        self.weights_cols
    }

    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        self.weights[band * self.weights_cols + bin]
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.weights[band * self.weights_cols..(band + 1) * self.weights_cols]
    }

    /// Peak frequency of each triangle, strictly increasing.
    pub fn center_frequencies(&self) -> &[f64] {
        &self.centers_hz
    }
}

/// Build a mel filterbank for spectra produced under `cfg` at `sample_rate`.
/// Peaks are equally spaced on the mel scale between `f_min` and `f_max`;
/// each triangle is scaled by `2 / (width in Hz)`. A band whose triangle is
/// too narrow to touch any FFT bin is reported as [`DspError::DegenerateBand`].
pub fn mel_filterbank(
    n_mels: usize,
    cfg: &StftConfig,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelBank, DspError> {
    cfg.validate()?;
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels < 1 || !(0.0..f_max).contains(&f_min) || f_max > nyquist {
        return Err(DspError::InvalidBandRange {
            f_min,
            f_max,
            nyquist,
        });
    }

    let bins = cfg.bins();
    let mel_lo = hz_to_mel(f_min);
    let mel_hi = hz_to_mel(f_max);
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..bins)
        .map(|k| k as f64 * sample_rate as f64 / cfg.fft_len as f64)
        .collect();

    let mut weights = vec![0.0f64; n_mels * bins];
    let mut support = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let rise = mid - lo;
        let fall = hi - mid;
        if rise <= 0.0 || fall <= 0.0 {
            return Err(DspError::DegenerateBand { band: m });
        }
        let norm = 2.0 / (hi - lo);
        let mut first = None;
        let mut last = 0usize;
        for (k, &f) in bin_hz.iter().enumerate() {
            let w = ((f - lo) / rise).min((hi - f) / fall).max(0.0) * norm;
            if w > 0.0 {
                weights[m * bins + k] = w;
                if first.is_none() {
                    first = Some(k);
                }
                last = k;
            }
        }
        match first {
            Some(start) => support.push((start, last + 1)),
            None => return Err(DspError::DegenerateBand { band: m }),
        }
    }

    Ok(MelBank {
        weights_rows: n_mels,
        weights_cols: bins,
        weights,
        support,
        centers_hz: edges_hz[1..=n_mels].to_vec(),
        f_min,
        f_max,
    })
}

/// Project a power grid onto a mel bank and convert to decibels:
/// `10 log10(max(M, floor))`, referenced so the matrix maximum sits at 0 dB,
/// clamped below at -80 dB. A grid with no energy above `floor` is left
/// unreferenced (pure silence must not be promoted to 0 dB) and therefore
/// clamps to -80 dB everywhere.
pub fn mel_log(grid: &PowerGrid, bank: &MelBank, floor: f64) -> Result<Mat, DspError> {
    assert!(floor > 0.0, "dB floor must be positive");
    if bank.bins() != grid.bins() {
        return Err(DspError::BinMismatch {
            bank_bins: bank.bins(),
            grid_bins: grid.bins(),
        });
    }
    let frames = grid.frames();
    let mut out = Mat::zeros(bank.n_mels(), frames);

    for m in 0..bank.n_mels() {
        let (start, end) = bank.support[m];
        let row = bank.row(m);
        let acc = out.row_mut(m);
        for k in start..end {
            let w = row[k];
            if w == 0.0 {
                continue;
            }
            let src = grid.values.row(k);
            for (a, &p) in acc.iter_mut().zip(src) {
                *a += w * p;
            }
        }
    }

    let peak_power = out.max_value();
    let data = out.as_mut_slice();
    for v in data.iter_mut() {
        *v = 10.0 * v.max(floor).log10();
    }
    if peak_power > floor {
        let peak_db = 10.0 * peak_power.log10();
        for v in data.iter_mut() {
            *v -= peak_db;
        }
    }
    for v in data.iter_mut() {
        *v = v.max(-DB_RANGE);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tb_config() -> StftConfig {
        StftConfig::new(2048, 960, 2048)
    }

    #[test]
    fn slaney_scale_roundtrip_and_knee() {
        for hz in [0.0, 150.0, 999.0, 1000.0, 4000.0, 24000.0] {
            let back = mel_to_hz(hz_to_mel(hz));
            assert!((back - hz).abs() < 1e-9, "{hz} -> {back}");
        }
        assert!((hz_to_mel(1000.0) - 15.0).abs() < 1e-12);
        assert!((hz_to_mel(200.0 / 3.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bank_shape_for_80_bands() {
        let bank = mel_filterbank(80, &tb_config(), 48000, 0.0, 24000.0).unwrap();
        assert_eq!(bank.n_mels(), 80);
        assert_eq!(bank.bins(), 1025);
    }

    #[test]
    fn rows_are_nonnegative_and_unimodal() {
        let bank = mel_filterbank(80, &tb_config(), 48000, 0.0, 24000.0).unwrap();
        for m in 0..bank.n_mels() {
            let row = bank.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().any(|&w| w > 0.0));
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            for k in 1..=peak {
                assert!(row[k] >= row[k - 1], "band {m} not rising at bin {k}");
            }
            for k in peak + 1..row.len() {
                assert!(row[k] <= row[k - 1], "band {m} not falling at bin {k}");
            }
        }
    }

    #[test]
    fn centers_strictly_increase() {
        let bank = mel_filterbank(256, &StftConfig::new(48000, 24000, 65536), 48000, 0.0, 24000.0)
            .unwrap();
        let centers = bank.center_frequencies();
        assert_eq!(centers.len(), 256);
        for pair in centers.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn too_many_bands_for_a_small_fft_degenerates() {
        let err = mel_filterbank(128, &StftConfig::new(128, 64, 128), 48000, 0.0, 24000.0)
            .unwrap_err();
        assert!(matches!(err, DspError::DegenerateBand { .. }));
    }

    #[test]
    fn invalid_ranges_rejected() {
        let cfg = tb_config();
        assert!(mel_filterbank(80, &cfg, 48000, -1.0, 24000.0).is_err());
        assert!(mel_filterbank(80, &cfg, 48000, 0.0, 25000.0).is_err());
        assert!(mel_filterbank(80, &cfg, 48000, 500.0, 500.0).is_err());
        assert!(mel_filterbank(0, &cfg, 48000, 0.0, 24000.0).is_err());
    }

    fn grid_from(cfg: StftConfig, bins: usize, frames: usize, data: Vec<f64>) -> PowerGrid {
        PowerGrid {
            values: Mat::from_vec(bins, frames, data),
            config: cfg,
            sample_rate: 48000,
        }
    }

    #[test]
    fn silence_clamps_to_minus_80() {
        let cfg = StftConfig::new(64, 32, 64);
        let bank = mel_filterbank(8, &cfg, 48000, 0.0, 24000.0).unwrap();
        let grid = grid_from(cfg, cfg.bins(), 5, vec![0.0; cfg.bins() * 5]);
        let out = mel_log(&grid, &bank, 1e-10).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == -80.0));
    }

    #[test]
    fn two_energies_reference_to_peak() {
        // Bypass the projection by using an identity-like scenario: a bank
        // row can scale energies, so check the log/shift stage directly via
        // a crafted grid where band energies come out as (1, 10).
        let cfg = StftConfig::new(64, 32, 64);
        let bank = mel_filterbank(4, &cfg, 48000, 0.0, 24000.0).unwrap();
        let bins = cfg.bins();
        // Frame 0: power only where band 1 listens, scaled so the band sums
        // to 1. Frame 1: same cells scaled to sum 10.
        let (start, end) = bank.support[1];
        let band_sum: f64 = bank.row(1)[start..end].iter().sum();
        let mut data = vec![0.0; bins * 2];
        for k in start..end {
            data[k * 2] = 1.0 / band_sum;
            data[k * 2 + 1] = 10.0 / band_sum;
        }
        let out = mel_log(&grid_from(cfg, bins, 2, data), &bank, 1e-10).unwrap();
        assert!((out.at(1, 1) - 0.0).abs() < 1e-9, "peak should sit at 0 dB");
        assert!((out.at(1, 0) - (-10.0)).abs() < 1e-9, "1:10 ratio is -10 dB");
    }

    #[test]
    fn matches_direct_evaluation_oracle() {
        let cfg = StftConfig::new(64, 32, 64);
        let bins = cfg.bins();
        let bank = mel_filterbank(6, &cfg, 48000, 0.0, 24000.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let frames = rng.gen_range(1..6);
            let data: Vec<f64> = (0..bins * frames)
                .map(|_| rng.gen_range(0.0..2.0))
                .collect();
            let grid = grid_from(cfg, bins, frames, data.clone());
            let got = mel_log(&grid, &bank, 1e-10).unwrap();

            // Independent path: dense matmul in transposed loop order, then
            // the log rules applied step by step.
            let mut oracle = vec![0.0f64; 6 * frames];
            for t in 0..frames {
                for m in 0..6 {
                    let mut acc = 0.0;
                    for k in 0..bins {
                        acc += bank.weight(m, k) * data[k * frames + t];
                    }
                    oracle[m * frames + t] = acc;
                }
            }
            let peak = oracle.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut db: Vec<f64> = oracle.iter().map(|&v| 10.0 * v.max(1e-10).log10()).collect();
            if peak > 1e-10 {
                let peak_db = 10.0 * peak.log10();
                for v in db.iter_mut() {
                    *v -= peak_db;
                }
            }
            for v in db.iter_mut() {
                *v = v.max(-80.0);
            }
            for (a, b) in got.as_slice().iter().zip(&db) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn output_bounded_in_db_range() {
        let cfg = StftConfig::new(64, 32, 64);
        let bins = cfg.bins();
        let bank = mel_filterbank(6, &cfg, 48000, 0.0, 24000.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let data: Vec<f64> = (0..bins * 3).map(|_| rng.gen_range(0.0..1e6)).collect();
            let out = mel_log(&grid_from(cfg, bins, 3, data), &bank, 1e-10).unwrap();
            assert!(out.as_slice().iter().all(|&v| (-80.0..=0.0).contains(&v)));
        }
    }

    #[test]
    fn bin_mismatch_is_an_error() {
        let cfg = StftConfig::new(64, 32, 64);
        let bank = mel_filterbank(6, &cfg, 48000, 0.0, 24000.0).unwrap();
        let other = StftConfig::new(128, 64, 128);
        let grid = grid_from(other, other.bins(), 2, vec![0.0; other.bins() * 2]);
        assert!(matches!(
            mel_log(&grid, &bank, 1e-10),
            Err(DspError::BinMismatch { .. })
        ));
    }
}
