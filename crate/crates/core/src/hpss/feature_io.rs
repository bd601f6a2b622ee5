//! Feature cache files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ASCFEAT\0" (8) | version u32 | reserved u32      -- 16-byte header
//! clip_id: u32 len + bytes
//! label:   u8 present flag, then u32 len + bytes if set
//! twice (harmonic then percussive):
//!     bias u8 | component u8 | rows u32 | cols u32 | rows*cols f32 values
//! crc32 over everything above (u32)
//! ```

use std::fs;
use std::path::Path;

use super::{Bias, Component, FeatureError, FeatureMatrix, FeaturePair};
use crate::fileio::{checksum, put_bytes, put_f32s, put_u32, Reader};

pub const FEATURE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ASCFEAT\0";

fn bias_code(b: Bias) -> u8 {
    match b {
        Bias::TimeBiased => 0,
        Bias::FrequencyBiased => 1,
    }
}

fn component_code(c: Component) -> u8 {
    match c {
        Component::Harmonic => 0,
        Component::Percussive => 1,
    }
}

fn encode_matrix(out: &mut Vec<u8>, m: &FeatureMatrix) {
    out.push(bias_code(m.bias));
    out.push(component_code(m.component));
    put_u32(out, m.rows() as u32);
    put_u32(out, m.cols() as u32);
    put_f32s(out, m.as_slice());
}

/// Serialize a feature pair to bytes.
pub fn encode_feature(pair: &FeaturePair) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FEATURE_FORMAT_VERSION);
    put_u32(&mut out, 0); // reserved
    put_bytes(&mut out, pair.clip_id.as_bytes());
    match &pair.label {
        Some(label) => {
            out.push(1);
            put_bytes(&mut out, label.as_bytes());
        }
        None => out.push(0),
    }
    encode_matrix(&mut out, &pair.harmonic);
    encode_matrix(&mut out, &pair.percussive);
    let crc = checksum(&out);
    put_u32(&mut out, crc);
    out
}

/// Write `<clip_id>.feat` content to `path`.
pub fn write_feature(pair: &FeaturePair, path: &Path) -> Result<(), FeatureError> {
    fs::write(path, encode_feature(pair)).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn corrupt(path: &str, reason: &str) -> FeatureError {
    FeatureError::CorruptFile {
        path: path.to_string(),
        reason: reason.to_string(),
    }
}

/// Decode a feature pair from bytes. `label` names the source in errors.
pub fn decode_feature(bytes: &[u8], label: &str) -> Result<FeaturePair, FeatureError> {
    if bytes.len() < 20 {
        return Err(corrupt(label, "shorter than header plus checksum"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if checksum(body) != stored {
        return Err(corrupt(label, "checksum mismatch"));
    }

    let mut r = Reader::new(body);
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(corrupt(label, "bad magic"));
    }
    let version = r.u32().ok_or_else(|| corrupt(label, "missing version"))?;
    if version != FEATURE_FORMAT_VERSION {
        return Err(FeatureError::VersionMismatch {
            path: label.to_string(),
            got: version,
            want: FEATURE_FORMAT_VERSION,
        });
    }
    r.u32().ok_or_else(|| corrupt(label, "missing reserved"))?;

    let clip_id = read_string(&mut r, label, "clip id")?;
    let has_label = r.u8().ok_or_else(|| corrupt(label, "missing label flag"))?;
    let scene_label = match has_label {
        0 => None,
        1 => Some(read_string(&mut r, label, "label")?),
        _ => return Err(corrupt(label, "bad label flag")),
    };

    let harmonic = decode_matrix(&mut r, label)?;
    let percussive = decode_matrix(&mut r, label)?;
    if r.remaining() != 0 {
        return Err(corrupt(label, "trailing bytes"));
    }
    Ok(FeaturePair {
        harmonic,
        percussive,
        label: scene_label,
        clip_id,
    })
}

/// Read a feature pair from disk.
pub fn read_feature(path: &Path) -> Result<FeaturePair, FeatureError> {
    let display = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| FeatureError::Io {
        path: display.clone(),
        source,
    })?;
    decode_feature(&bytes, &display)
}

fn read_string(r: &mut Reader, label: &str, what: &str) -> Result<String, FeatureError> {
    let raw = r
        .bytes()
        .ok_or_else(|| corrupt(label, &format!("missing {what}")))?;
    String::from_utf8(raw.to_vec()).map_err(|_| corrupt(label, &format!("{what} not utf-8")))
}

fn decode_matrix(r: &mut Reader, label: &str) -> Result<FeatureMatrix, FeatureError> {
    let bias = match r.u8() {
        Some(0) => Bias::TimeBiased,
        Some(1) => Bias::FrequencyBiased,
        _ => return Err(corrupt(label, "bad bias tag")),
    };
    let component = match r.u8() {
        Some(0) => Component::Harmonic,
        Some(1) => Component::Percussive,
        _ => return Err(corrupt(label, "bad component tag")),
    };
    let rows = r.u32().ok_or_else(|| corrupt(label, "missing rows"))? as usize;
    let cols = r.u32().ok_or_else(|| corrupt(label, "missing cols"))? as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| corrupt(label, "matrix size overflow"))?;
    let values = r
        .f32s(count)
        .ok_or_else(|| corrupt(label, "matrix payload truncated"))?;
    Ok(FeatureMatrix::new(rows, cols, values, bias, component))
}
