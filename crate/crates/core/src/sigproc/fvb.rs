//! `FVB1` feature-vector batches.
//!
//! Layout (little-endian): magic `FVB1`, version `u16`, vector count `u64`,
//! vector length `u32`, row-major `f32` values, then one `f32` energy per vector.

use std::fs;
use std::path::Path;

use super::FeatureVector;
use crate::error::{Error, Result};

pub const FVB_MAGIC: &[u8; 4] = b"FVB1";
pub const FVB_VERSION: u16 = 1;

pub fn encode_batch(vectors: &[FeatureVector], n_input: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(18 + vectors.len() * (n_input + 1) * 4);
    out.extend_from_slice(FVB_MAGIC);
    out.extend_from_slice(&FVB_VERSION.to_le_bytes());
    out.extend_from_slice(&(vectors.len() as u64).to_le_bytes());
    out.extend_from_slice(&(n_input as u32).to_le_bytes());
    for v in vectors {
        if v.values.len() != n_input {
            return Err(Error::Shape(format!("vector of length {} in a batch of {n_input}", v.values.len())));
        }
        for x in &v.values {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    for v in vectors {
        out.extend_from_slice(&(v.energy as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes a batch. Values come back widened from `f32`; cycle indices are
/// the row positions.
pub fn decode_batch(bytes: &[u8]) -> Result<(Vec<FeatureVector>, usize)> {
    if bytes.len() < 18 {
        return Err(Error::Corrupt("truncated FVB1 header".into()));
    }
    if &bytes[..4] != FVB_MAGIC {
        return Err(Error::BadMagic { expected: "FVB1" });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FVB_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FVB_VERSION,
        });
    }
    let n = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let n_input = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
    let body = &bytes[18..];
    let expected = n
        .checked_mul(n_input + 1)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Corrupt("batch size overflow".into()))?;
    if body.len() != expected {
        return Err(Error::Corrupt(format!("expected {expected} payload bytes, found {}", body.len())));
    }
    let floats: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let (values, energies) = floats.split_at(n * n_input);
    let vectors = (0..n)
        .map(|i| {
            let row = values[i * n_input..(i + 1) * n_input].to_vec();
            let degenerate = row.iter().all(|&v| v == 0.0);
            FeatureVector {
                values: row,
                cycle_index: i,
                energy: energies[i],
                degenerate,
            }
        })
        .collect();
    Ok((vectors, n_input))
}

pub fn write_batch(path: &Path, vectors: &[FeatureVector], n_input: usize) -> Result<()> {
    fs::write(path, encode_batch(vectors, n_input)?)?;
    Ok(())
}

pub fn read_batch(path: &Path) -> Result<(Vec<FeatureVector>, usize)> {
    decode_batch(&fs::read(path)?)
}
