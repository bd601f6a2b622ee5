//! Short-time Fourier transform over Hann-windowed frames.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{ComplexGrid, DspError, StftConfig};
use crate::audio::AudioClip;

/// Periodic Hann window: `w[n] = 0.5 - 0.5 cos(2 pi n / length)`.
pub fn hann_window(length: usize) -> Result<Vec<f64>, DspError> {
    if length < 2 {
        return Err(DspError::LengthTooSmall(length));
    }
    let step = std::f64::consts::TAU / length as f64;
    Ok((0..length)
        .map(|n| 0.5 - 0.5 * (step * n as f64).cos())
        .collect())
}

/// Reflect (without repeating the edge sample) an out-of-range index back
/// into `[0, len)`, bouncing as many times as needed.
fn reflect_index(mut i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Compute the STFT of a mono clip.
///
/// With `center = true` the signal is reflect-padded by `fft_len / 2` on
/// both sides, frame `t` starts at `t * hop_len` in the padded signal, and
/// the frame count is `1 + floor(len / hop_len)`. The Hann window is
/// zero-padded (centered) up to `fft_len`. Only bins `0..=fft_len/2` are
/// retained.
pub fn stft(clip: &AudioClip, cfg: &StftConfig) -> Result<ComplexGrid, DspError> {
    cfg.validate()?;
    let samples = &clip.samples;
    let len = samples.len();
    let fft_len = cfg.fft_len;

    let window = hann_window(cfg.window_len)?;
    // Window centered within the FFT frame, zeros elsewhere.
    let mut padded_window = vec![0.0f64; fft_len];
    let w_off = (fft_len - cfg.window_len) / 2;
    padded_window[w_off..w_off + cfg.window_len].copy_from_slice(&window);

    let (n_frames, frame_origin): (usize, isize) = if cfg.center {
        (1 + len / cfg.hop_len, -((fft_len / 2) as isize))
    } else {
        if len < cfg.window_len {
            return Err(DspError::ClipShorterThanWindow {
                len,
                window: cfg.window_len,
            });
        }
        // Without centering the window sits at the start of the frame.
        (1 + (len - cfg.window_len) / cfg.hop_len, 0)
    };

    let bins = cfg.bins();
    let mut grid = ComplexGrid::zeros(bins, n_frames, *cfg, clip.sample_rate);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(fft_len);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];

    for t in 0..n_frames {
        let start = frame_origin + (t * cfg.hop_len) as isize;
        if cfg.center {
            for (j, slot) in buf.iter_mut().enumerate() {
                let idx = reflect_index(start + j as isize, len);
                *slot = Complex::new(samples[idx] * padded_window[j], 0.0);
            }
        } else {
            let s = start as usize;
            for (j, slot) in buf.iter_mut().enumerate() {
                let x = if j < cfg.window_len {
                    samples[s + j] * window[j]
                } else {
                    0.0
                };
                *slot = Complex::new(x, 0.0);
            }
        }
        fft.process(&mut buf);
        for (bin, value) in buf.iter().take(bins).enumerate() {
            *grid.at_mut(bin, t) = *value;
        }
    }

    Ok(grid)
}
