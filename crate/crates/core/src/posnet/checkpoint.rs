//! `TMC1` checkpoints.
//!
//! Layout (little-endian): magic `TMC1`, version `u16`, `u32` length plus
//! TOML text of the [`ModelConfig`], then one record per tensor until end of
//! file: `u32` name length, UTF-8 name, rank `u8`, rank × `u32` dims, `f32` data.

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::params::Parameters;
use crate::error::{Error, Result};

pub const TMC_MAGIC: &[u8; 4] = b"TMC1";
pub const TMC_VERSION: u16 = 1;

pub fn encode_checkpoint(params: &Parameters<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.len() * 4);
    out.extend_from_slice(TMC_MAGIC);
    out.extend_from_slice(&TMC_VERSION.to_le_bytes());
    let text = params.config.to_text();
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for (i, t) in params.layout.tensors.iter().enumerate() {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in params.slice(i) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Corrupt("checkpoint truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint. With `expected`, the embedded config must match it.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Parameters<f32>> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != TMC_MAGIC {
        return Err(Error::BadMagic { expected: "TMC1" });
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != TMC_VERSION {
        return Err(Error::Version {
            found: version,
            expected: TMC_VERSION,
        });
    }
    let text_len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(text_len)?).map_err(|_| Error::Corrupt("config is not UTF-8".into()))?;
    let config = ModelConfig::from_text(text).map_err(|e| Error::Corrupt(e.to_string()))?;
    if let Some(want) = expected {
        if want != &config {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has n_input {} / n_class {}, requested n_input {} / n_class {}",
                config.n_input, config.n_class, want.n_input, want.n_class
            )));
        }
    }
    let mut params = Parameters::<f32>::zeros(&config).map_err(|e| Error::Corrupt(e.to_string()))?;
    let layout = params.layout.clone();
    for (i, spec) in layout.tensors.iter().enumerate() {
        let name_len = r.u32()? as usize;
        let name = r.take(name_len)?;
        if name != spec.name.as_bytes() {
            return Err(Error::ShapeMismatch(format!(
                "expected tensor {} but found {}",
                spec.name,
                String::from_utf8_lossy(name)
            )));
        }
        let rank = r.take(1)?[0] as usize;
        let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        if dims != spec.shape {
            return Err(Error::ShapeMismatch(format!("{}: shape {:?}, expected {:?}", spec.name, dims, spec.shape)));
        }
        let raw = r.take(spec.len * 4)?;
        for (dst, c) in params.slice_mut(i).iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    if !r.buf.is_empty() {
        return Err(Error::Corrupt(format!("{} trailing bytes", r.buf.len())));
    }
    if !params.all_finite() {
        return Err(Error::Corrupt("non-finite weights".into()));
    }
    Ok(params)
}

pub fn save_model(params: &Parameters<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn load_model(path: &Path, expected: Option<&ModelConfig>) -> Result<Parameters<f32>> {
    decode_checkpoint(&fs::read(path)?, expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let cfg = ModelConfig::tiny(5);
        let p = Parameters::<f32>::init(&cfg, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tmc");
        save_model(&p, &path).unwrap();
        let q = load_model(&path, Some(&cfg)).unwrap();
        assert_eq!(p.config, q.config);
        assert!(p.data.iter().zip(&q.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn load_errors_are_distinct() {
        let cfg = ModelConfig::tiny(5);
        let bytes = encode_checkpoint(&Parameters::<f32>::init(&cfg, 4).unwrap());
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3], None), Err(Error::Corrupt(_))));
        assert!(matches!(
            decode_checkpoint(&bytes, Some(&ModelConfig::tiny(6))),
            Err(Error::ShapeMismatch(_))
        ));
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(matches!(decode_checkpoint(&v, None), Err(Error::Version { found: 2, .. })));
        let mut m = bytes;
        m[0] = b'Q';
        assert!(matches!(decode_checkpoint(&m, None), Err(Error::BadMagic { .. })));
    }
}
