//! Feature file formats.
//!
//! JSON: an array of `{"values": [10 reals], "label": 0|1}`.
//!
//! Binary (little-endian throughout):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `FHFEAT01`                          |
//! | 8      | 8    | record count `n` as u64                   |
//! | 16     | 88·n | records: 10 × f64 values, then label as f64 |

use std::path::Path;

use super::{FeatureVector, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::fsutil;

const MAGIC: &[u8; 8] = b"FHFEAT01";
const RECORD_BYTES: usize = (NUM_FEATURES + 1) * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Json,
    Binary,
}

impl FeatureFormat {
    /// `.bin` selects the binary layout, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => FeatureFormat::Binary,
            _ => FeatureFormat::Json,
        }
    }
}

pub fn write_json(vectors: &[FeatureVector]) -> Vec<u8> {
    let mut out = serde_json::to_vec(vectors).expect("feature vectors serialize");
    out.push(b'\n');
    out
}

pub fn read_json(bytes: &[u8]) -> Result<Vec<FeatureVector>> {
    let vectors: Vec<FeatureVector> = serde_json::from_slice(bytes).map_err(|e| Error::json("<features>", e))?;
    validate(&vectors)?;
    Ok(vectors)
}

pub fn write_binary(vectors: &[FeatureVector]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + RECORD_BYTES * vectors.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(vectors.len() as u64).to_le_bytes());
    for v in vectors {
        for x in v.values {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&f64::from(v.label).to_le_bytes());
    }
    out
}

pub fn read_binary(bytes: &[u8]) -> Result<Vec<FeatureVector>> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::InvalidArgument("not a binary feature file (bad magic)".into()));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != n.saturating_mul(RECORD_BYTES) {
        return Err(Error::InvalidArgument(format!(
            "binary feature file declares {n} records but holds {} bytes",
            body.len()
        )));
    }
    let mut vectors = Vec::with_capacity(n);
    for rec in body.chunks_exact(RECORD_BYTES) {
        let mut fields = rec.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut values = [0.0; NUM_FEATURES];
        for v in values.iter_mut() {
            *v = fields.next().unwrap();
        }
        let label = fields.next().unwrap();
        if label != 0.0 && label != 1.0 {
            return Err(Error::InvalidArgument(format!("record label {label} is not 0 or 1")));
        }
        vectors.push(FeatureVector::new(values, label as u8));
    }
    validate(&vectors)?;
    Ok(vectors)
}

fn validate(vectors: &[FeatureVector]) -> Result<()> {
    for (i, v) in vectors.iter().enumerate() {
        if v.label > 1 {
            return Err(Error::InvalidArgument(format!("record {i}: label {} is not 0 or 1", v.label)));
        }
        if let Some(x) = v.values.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidArgument(format!("record {i}: component {x} outside [0, 1]")));
        }
    }
    Ok(())
}

pub fn save_features(path: &Path, vectors: &[FeatureVector]) -> Result<()> {
    let bytes = match FeatureFormat::from_path(path) {
        FeatureFormat::Json => write_json(vectors),
        FeatureFormat::Binary => write_binary(vectors),
    };
    fsutil::write_atomic(path, &bytes)
}

/// Load a feature file, sniffing the binary magic before falling back to JSON.
pub fn load_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        read_binary(&bytes)
    } else {
        serde_json::from_slice::<Vec<FeatureVector>>(&bytes)
            .map_err(|e| Error::json(path, e))
            .and_then(|v| validate(&v).map(|_| v))
    }
}
