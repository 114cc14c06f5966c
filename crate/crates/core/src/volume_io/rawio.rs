//! Little-endian float buffers and the `<json header>\n<raw payload>` framing
//! shared by patch sets and checkpoints.

use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};

pub fn f32_to_le_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn le_bytes_to_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn write_framed<H: Serialize>(path: &Path, header: &H, payload: &[f32]) -> Result<()> {
    let mut bytes = serde_json::to_vec(header).expect("header serializes");
    bytes.push(b'\n');
    bytes.extend(f32_to_le_bytes(payload));
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits a framed file into its parsed header and f32 payload.
pub fn read_framed<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "header", "missing header line"))?;
    let header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::format(path, "header", e.to_string()))?;
    let payload = &bytes[nl + 1..];
    if payload.len() % 4 != 0 {
        return Err(Error::format(
            path,
            "payload",
            format!("{} bytes is not a whole number of f32 values", payload.len()),
        ));
    }
    Ok((header, le_bytes_to_f32(payload)))
}
