//! Versioned binary container shared by the dataset cache and checkpoints.
//!
//! Layout: 5-byte magic, `\n`, u64 LE header length, UTF-8 JSON header,
//! then the payload as consecutive little-endian `f64`s.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{FateError, Result};

pub const DATASET_MAGIC: &[u8; 5] = b"FDAT1";
pub const CHECKPOINT_MAGIC: &[u8; 5] = b"FATE1";

pub fn encode<H: Serialize>(magic: &[u8; 5], header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(14 + json.len() + payload.len() * 8);
    out.extend_from_slice(magic);
    out.push(b'\n');
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode<H: DeserializeOwned>(magic: &[u8; 5], bytes: &[u8], origin: &Path) -> Result<(H, Vec<f64>)> {
    let bad = |reason: String| FateError::Format {
        path: origin.to_path_buf(),
        reason,
    };
    if bytes.len() < 14 || &bytes[..5] != magic || bytes[5] != b'\n' {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(5)]).into_owned();
        return Err(bad(format!(
            "expected magic {:?}, found {found:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let len = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes")) as usize;
    let body = &bytes[14..];
    if body.len() < len || !(body.len() - len).is_multiple_of(8) {
        return Err(bad("truncated container".into()));
    }
    let header = serde_json::from_slice(&body[..len]).map_err(|e| bad(e.to_string()))?;
    let payload = body[len..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, payload))
}

pub fn write<H: Serialize>(path: &Path, magic: &[u8; 5], header: &H, payload: &[f64]) -> Result<()> {
    let bytes = encode(magic, header, payload)?;
    fs::write(path, bytes).map_err(|e| FateError::io(path, e))
}

pub fn read<H: DeserializeOwned>(path: &Path, magic: &[u8; 5]) -> Result<(H, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| FateError::io(path, e))?;
    decode(magic, &bytes, path)
}
