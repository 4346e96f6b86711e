//! SNM1 surrogate-model blobs.
//!
//! Layout: magic `SNM1`, a u32 little-endian header length, a UTF-8 JSON
//! header, then every parameter group as little-endian f32 in the order the
//! header lists them (`theta1` then `theta2`, each layer's weights before its
//! bias).
//!
//! ```json
//! {"format_version":1,"config":{...},"init_seed":7,
//!  "groups":[{"name":"theta1","count":525362},{"name":"theta2","count":51}]}
//! ```

use std::fs;
use std::path::Path;

use neuroscore_core::net::{SurrogateConfig, SurrogateModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SNM1";
pub const FORMAT_VERSION: u32 = 1;
const GROUPS: [&str; 2] = ["theta1", "theta2"];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: SurrogateConfig,
    init_seed: u64,
    groups: Vec<Group>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Group {
    name: String,
    count: usize,
}

pub fn encode(model: &SurrogateModel<f32>) -> Vec<u8> {
    let groups = [model.theta1_parameters(), model.theta2_parameters()];
    let header = serde_json::to_vec(&Header {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        init_seed: model.init_seed(),
        groups: GROUPS
            .iter()
            .zip(&groups)
            .map(|(name, g)| Group { name: (*name).into(), count: g.len() })
            .collect(),
    })
    .expect("header serialises");
    let mut out = Vec::with_capacity(8 + header.len() + 4 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in groups.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<SurrogateModel<f32>, String> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err("not an SNM1 file (bad magic)".into());
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = header_len
        .checked_add(8)
        .filter(|&end| end <= bytes.len())
        .ok_or("header length runs past the end of the file")?;
    let header: Header = serde_json::from_slice(&bytes[8..body]).map_err(|e| format!("bad header: {e}"))?;
    if header.format_version != FORMAT_VERSION {
        return Err(format!("unsupported SNM format version {}", header.format_version));
    }
    let names: Vec<&str> = header.groups.iter().map(|g| g.name.as_str()).collect();
    if names != GROUPS {
        return Err(format!("parameter groups must be {GROUPS:?}, found {names:?}"));
    }
    let total: usize = header.groups.iter().map(|g| g.count).sum();
    if bytes.len() - body != total * 4 {
        return Err(format!(
            "header declares {total} parameters ({} bytes), payload has {} bytes",
            total * 4,
            bytes.len() - body
        ));
    }
    let values: Vec<f32> = bytes[body..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let (theta1, theta2) = values.split_at(header.groups[0].count);
    SurrogateModel::from_parameters(header.config, header.init_seed, theta1, theta2).map_err(|e| e.to_string())
}

pub fn write(path: &Path, model: &SurrogateModel<f32>) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<SurrogateModel<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SurrogateModel<f32> {
        let cfg = SurrogateConfig {
            input_dim: 6,
            theta1_layers: vec![5, 4],
            p300_dim: 4,
            theta2_layers: vec![3, 1],
            ..SurrogateConfig::default()
        };
        SurrogateModel::new(cfg, 11).unwrap()
    }

    #[test]
    fn round_trip() {
        let m = small();
        assert_eq!(decode(&encode(&m)).unwrap(), m);
    }

    #[test]
    fn payload_follows_header() {
        let m = small();
        let b = encode(&m);
        let header_len = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
        let first = f32::from_le_bytes(b[8 + header_len..12 + header_len].try_into().unwrap());
        assert_eq!(first, m.theta1()[0].weights()[0]);
        assert_eq!(b.len(), 8 + header_len + 4 * m.parameter_count());
    }

    #[test]
    fn rejects_truncation_and_versions() {
        let b = encode(&small());
        assert!(decode(&b[..b.len() - 4]).unwrap_err().contains("payload"));
        let mut bumped = b.clone();
        let key = b"\"format_version\":1";
        let at = b.windows(key.len()).position(|w| w == key).unwrap();
        bumped[at + key.len() - 1] = b'9';
        assert!(decode(&bumped).unwrap_err().contains("version"));
    }
}
