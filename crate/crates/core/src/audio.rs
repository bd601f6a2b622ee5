//! WAV decoding and clip validation.
//!
//! Decodes RIFF/WAVE containers (PCM 16/24-bit and IEEE float 32-bit),
//! folds multi-channel audio down to mono by per-frame averaging, and
//! validates clips against the pipeline's expected rate and duration.
//! No resampling is performed anywhere: a clip at the wrong rate is an
//! error, not something to paper over.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

/// Errors from WAV decoding and clip validation.
#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed container: {reason}")]
    MalformedContainer { path: String, reason: String },
    #[error("{path}: unsupported encoding: {detail}")]
    UnsupportedEncoding { path: String, detail: String },
    #[error("{path}: truncated data: chunk declares {declared} bytes, {available} available")]
    TruncatedData {
        path: String,
        declared: usize,
        available: usize,
    },
    #[error("{path}: non-finite sample at frame {frame}")]
    NonFiniteSample { path: String, frame: usize },
    #[error("{path}: audio stream is empty")]
    EmptyStream { path: String },
    #[error("{path}: sample rate {got} Hz, expected {want} Hz (no resampling is performed)")]
    RateMismatch { path: String, got: u32, want: u32 },
    #[error("{path}: {got} samples, outside tolerance +/-{tolerance} of expected {want}")]
    DurationOutOfTolerance {
        path: String,
        got: usize,
        want: usize,
        tolerance: usize,
    },
}

/// A decoded, possibly multi-channel clip. Produced by [`read_wav`]; the
/// only way forward in the pipeline is [`to_mono`].
#[derive(Debug, Clone)]
pub struct MultiChannelClip {
    /// One sample vector per channel, all the same length.
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub source_path: String,
}

impl MultiChannelClip {
    pub fn frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}

/// A validated mono clip with samples in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_path: String,
}

impl fmt::Display for AudioClip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} samples @ {} Hz)",
            self.source_path,
            self.samples.len(),
            self.sample_rate
        )
    }
}

/// Sample encodings accepted by the decoder and produced by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Pcm24,
    Float32,
}

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Decode a WAV file. Integer PCM is normalized to `[-1, 1]` by dividing
/// by the format's full-scale value (32768 for 16-bit, 8388608 for 24-bit);
/// float data is taken as-is. Channels are preserved for [`to_mono`].
pub fn read_wav(path: &Path) -> Result<MultiChannelClip, AudioError> {
    let display = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| AudioError::Io {
        path: display.clone(),
        source,
    })?;
    decode_wav(&bytes, &display)
}

/// Decode a WAV byte stream. `label` is used for diagnostics only.
pub fn decode_wav(bytes: &[u8], label: &str) -> Result<MultiChannelClip, AudioError> {
    let malformed = |reason: &str| AudioError::MalformedContainer {
        path: label.to_string(),
        reason: reason.to_string(),
    };

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE header"));
    }

    let mut fmt_chunk: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                if body_start + size > bytes.len() || size < 16 {
                    return Err(malformed("fmt chunk out of bounds"));
                }
                fmt_chunk = Some(FmtChunk::parse(&bytes[body_start..body_start + size], label)?);
            }
            b"data" => {
                let available = bytes.len().saturating_sub(body_start);
                if size > available {
                    return Err(AudioError::TruncatedData {
                        path: label.to_string(),
                        declared: size,
                        available,
                    });
                }
                data = Some(&bytes[body_start..body_start + size]);
                break;
            }
            _ => {
                if body_start + size > bytes.len() {
                    return Err(malformed("chunk size exceeds file"));
                }
            }
        }
        // Chunks are word-aligned.
        pos = body_start + size + (size & 1);
    }

    let fmt = fmt_chunk.ok_or_else(|| malformed("no fmt chunk before data"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;

    let bytes_per_sample = (fmt.bits_per_sample / 8) as usize;
    let frame_bytes = bytes_per_sample * fmt.channels as usize;
    if frame_bytes == 0 || fmt.block_align as usize != frame_bytes {
        return Err(malformed("block alignment inconsistent with format"));
    }
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(AudioError::EmptyStream {
            path: label.to_string(),
        });
    }

    let mut channels = vec![Vec::with_capacity(frames); fmt.channels as usize];
    for frame in 0..frames {
        for (ch, out) in channels.iter_mut().enumerate() {
            let off = frame * frame_bytes + ch * bytes_per_sample;
            let value = match (fmt.format, fmt.bits_per_sample) {
                (FORMAT_PCM, 16) => {
                    i16::from_le_bytes([data[off], data[off + 1]]) as f64 / 32768.0
                }
                (FORMAT_PCM, 24) => {
                    let raw =
                        (data[off] as i32) | ((data[off + 1] as i32) << 8) | ((data[off + 2] as i32) << 16);
                    // Sign-extend from 24 bits.
                    let signed = (raw << 8) >> 8;
                    signed as f64 / 8_388_608.0
                }
                (FORMAT_IEEE_FLOAT, 32) => f32::from_le_bytes([
                    data[off],
                    data[off + 1],
                    data[off + 2],
                    data[off + 3],
                ]) as f64,
                _ => unreachable!("format validated in FmtChunk::parse"),
            };
            if !value.is_finite() {
                return Err(AudioError::NonFiniteSample {
                    path: label.to_string(),
                    frame,
                });
            }
            out.push(value);
        }
    }

    Ok(MultiChannelClip {
        channels,
        sample_rate: fmt.sample_rate,
        source_path: label.to_string(),
    })
}

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits_per_sample: u16,
}

impl FmtChunk {
    fn parse(body: &[u8], label: &str) -> Result<Self, AudioError> {
        let format = u16::from_le_bytes([body[0], body[1]]);
        let channels = u16::from_le_bytes([body[2], body[3]]);
        let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
        let block_align = u16::from_le_bytes([body[12], body[13]]);
        let bits_per_sample = u16::from_le_bytes([body[14], body[15]]);

        let supported = matches!(
            (format, bits_per_sample),
            (FORMAT_PCM, 16) | (FORMAT_PCM, 24) | (FORMAT_IEEE_FLOAT, 32)
        );
        if !supported {
            return Err(AudioError::UnsupportedEncoding {
                path: label.to_string(),
                detail: format!("format tag {format}, {bits_per_sample} bits per sample"),
            });
        }
        if channels == 0 || sample_rate == 0 {
            return Err(AudioError::MalformedContainer {
                path: label.to_string(),
                reason: "zero channels or sample rate".to_string(),
            });
        }
        Ok(Self {
            format,
            channels,
            sample_rate,
            block_align,
            bits_per_sample,
        })
    }
}

/// Fold a multi-channel clip down to mono by the per-frame arithmetic mean.
pub fn to_mono(clip: &MultiChannelClip) -> AudioClip {
    let frames = clip.frames();
    let n_ch = clip.channels.len() as f64;
    let samples = if clip.channels.len() == 1 {
        clip.channels[0].clone()
    } else {
        (0..frames)
            .map(|i| clip.channels.iter().map(|ch| ch[i]).sum::<f64>() / n_ch)
            .collect()
    };
    AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_path: clip.source_path.clone(),
    }
}

/// Check a mono clip against the expected rate and duration. Lengths within
/// `tolerance` samples of `expected_rate * expected_seconds` are truncated or
/// zero-padded to the exact length; anything else is an error.
pub fn validate_clip(
    mut clip: AudioClip,
    expected_rate: u32,
    expected_seconds: f64,
    tolerance: usize,
) -> Result<AudioClip, AudioError> {
    if clip.sample_rate != expected_rate {
        return Err(AudioError::RateMismatch {
            path: clip.source_path,
            got: clip.sample_rate,
            want: expected_rate,
        });
    }
    let want = (expected_rate as f64 * expected_seconds).round() as usize;
    let got = clip.samples.len();
    if got.abs_diff(want) > tolerance {
        return Err(AudioError::DurationOutOfTolerance {
            path: clip.source_path,
            got,
            want,
            tolerance,
        });
    }
    clip.samples.resize(want, 0.0);
    Ok(clip)
}

/// Write a WAV file. Each inner vector is one channel; all channels must
/// have equal length. Values outside `[-1, 1]` are clamped on integer
/// formats.
pub fn write_wav(
    path: &Path,
    channels: &[Vec<f64>],
    sample_rate: u32,
    format: SampleFormat,
) -> io::Result<()> {
    let frames = channels.first().map_or(0, Vec::len);
    assert!(
        channels.iter().all(|c| c.len() == frames),
        "channel lengths differ"
    );
    let n_ch = channels.len() as u16;
    let (tag, bits): (u16, u16) = match format {
        SampleFormat::Pcm16 => (FORMAT_PCM, 16),
        SampleFormat::Pcm24 => (FORMAT_PCM, 24),
        SampleFormat::Float32 => (FORMAT_IEEE_FLOAT, 32),
    };
    let bytes_per_sample = (bits / 8) as usize;
    let block_align = n_ch as usize * bytes_per_sample;
    let data_len = frames * block_align;

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&n_ch.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&((sample_rate as usize * block_align) as u32).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());

    for frame in 0..frames {
        for ch in channels {
            let x = ch[frame];
            match format {
                SampleFormat::Pcm16 => {
                    let v = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    out.extend_from_slice(&v.to_le_bytes());
                }
                SampleFormat::Pcm24 => {
                    let v = (x * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32;
                    let b = v.to_le_bytes();
                    out.extend_from_slice(&b[0..3]);
                }
                SampleFormat::Float32 => {
                    out.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out)
}
