//! EPB1 epoch bundles.
//!
//! Little-endian layout:
//!
//! | field | type |
//! |---|---|
//! | magic `EPB1` | 4 bytes |
//! | format version (1) | u16 |
//! | condition (0 standard, 1 target) | u8 |
//! | channels, timepoints, trials | u32 each |
//! | sample rate (Hz), t0 (s) | f32 each |
//! | samples, trial-major then channel then time | f32 × trials·channels·timepoints |
//! | trailer length | u32 |
//! | trailer: JSON `{"channel_labels": [...], "category_labels": [...] or null}` | UTF-8 |
//!
//! Samples are stored as 32-bit floats, so writing rounds each value to the
//! nearest `f32`.

use std::fs;
use std::path::Path;

use neuroscore_core::eeg::{Condition, EegEpochSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EPB1";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 3 * 4 + 2 * 4;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Trailer {
    channel_labels: Vec<String>,
    category_labels: Option<Vec<String>>,
}

pub fn encode(epochs: &EegEpochSet) -> Vec<u8> {
    let trailer = serde_json::to_vec(&Trailer {
        channel_labels: epochs.channel_labels().to_vec(),
        category_labels: epochs.category_labels().map(<[String]>::to_vec),
    })
    .expect("labels serialise");
    let mut out = Vec::with_capacity(HEADER_LEN + epochs.data().len() * 4 + 4 + trailer.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match epochs.condition() {
        Condition::Standard => 0,
        Condition::Target => 1,
    });
    for n in [epochs.n_channels(), epochs.n_times(), epochs.n_trials()] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&(epochs.sample_rate() as f32).to_le_bytes());
    out.extend_from_slice(&(epochs.t0() as f32).to_le_bytes());
    for &v in epochs.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&(trailer.len() as u32).to_le_bytes());
    out.extend_from_slice(&trailer);
    out
}

/// Parses a bundle; the error is a description of the first violation.
pub fn decode(bytes: &[u8]) -> std::result::Result<EegEpochSet, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the {HEADER_LEN}-byte header", bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err("not an EPB1 file (bad magic)".into());
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != FORMAT_VERSION {
        return Err(format!("unsupported EPB format version {version}"));
    }
    let condition = match bytes[6] {
        0 => Condition::Standard,
        1 => Condition::Target,
        c => return Err(format!("unknown condition code {c}")),
    };
    let (c, t, n) = (u32_at(7) as usize, u32_at(11) as usize, u32_at(15) as usize);
    let (fs, t0) = (f32_at(19) as f64, f32_at(23) as f64);
    let samples = c
        .checked_mul(t)
        .and_then(|v| v.checked_mul(n))
        .filter(|v| v.checked_mul(4).is_some())
        .ok_or("declared dimensions overflow")?;
    let data_end = HEADER_LEN + samples * 4;
    if bytes.len() < data_end + 4 {
        return Err(format!(
            "declared {n} trials × {c} channels × {t} samples need at least {} bytes, file has {}",
            data_end + 4,
            bytes.len()
        ));
    }
    let trailer_len = u32_at(data_end) as usize;
    let expected = data_end + 4 + trailer_len;
    if bytes.len() != expected {
        return Err(format!("file is {} bytes, header and trailer declare {expected}", bytes.len()));
    }
    let data = bytes[HEADER_LEN..data_end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let trailer: Trailer =
        serde_json::from_slice(&bytes[data_end + 4..]).map_err(|e| format!("bad trailer: {e}"))?;
    EegEpochSet::new(data, n, c, t, fs, t0, trailer.channel_labels, condition, trailer.category_labels)
        .map_err(|e| e.to_string())
}

pub fn write(path: &Path, epochs: &EegEpochSet) -> Result<()> {
    fs::write(path, encode(epochs)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<EegEpochSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}
