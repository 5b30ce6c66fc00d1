//! `EMT1` binary traces, their TOML sidecar, and CSV export.
//!
//! Layout (little-endian): magic `EMT1`, version `u16`, sample rate `f64`,
//! sample count `u64`, then `f32` samples.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::synth::{EMTrace, TraceMeta};
use crate::error::{Error, Result};

pub const EMT_MAGIC: &[u8; 4] = b"EMT1";
pub const EMT_VERSION: u16 = 1;

pub fn encode_trace(trace: &EMTrace) -> Vec<u8> {
    let mut out = Vec::with_capacity(22 + 4 * trace.len());
    out.extend_from_slice(EMT_MAGIC);
    out.extend_from_slice(&EMT_VERSION.to_le_bytes());
    out.extend_from_slice(&trace.sample_rate.to_le_bytes());
    out.extend_from_slice(&(trace.len() as u64).to_le_bytes());
    for s in &trace.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn decode_trace(bytes: &[u8]) -> Result<EMTrace> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != EMT_MAGIC {
        return Err(Error::BadMagic { expected: "EMT1" });
    }
    let mut b2 = [0u8; 2];
    read_exact(&mut r, &mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != EMT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: EMT_VERSION,
        });
    }
    let mut b8 = [0u8; 8];
    read_exact(&mut r, &mut b8)?;
    let sample_rate = f64::from_le_bytes(b8);
    read_exact(&mut r, &mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    if r.len() != n.checked_mul(4).ok_or_else(|| Error::Corrupt("sample count overflow".into()))? {
        return Err(Error::Corrupt(format!("expected {n} samples, found {} bytes", r.len())));
    }
    let samples = r
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EMTrace::new(sample_rate, samples).map_err(|e| Error::Corrupt(e.to_string()))
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Corrupt("truncated header".into()))
}

/// Sidecar path for a trace file: `trace.emt` -> `trace.emt.toml`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// Writes the binary trace and its metadata sidecar.
pub fn write_trace(path: &Path, trace: &EMTrace) -> Result<()> {
    fs::write(path, encode_trace(trace))?;
    let meta = toml::to_string(&trace.meta).map_err(|e| Error::Serialization(e.to_string()))?;
    fs::write(sidecar_path(path), meta)?;
    Ok(())
}

/// Reads a trace; the sidecar is optional.
pub fn read_trace(path: &Path) -> Result<EMTrace> {
    let mut trace = decode_trace(&fs::read(path)?)?;
    let side = sidecar_path(path);
    if side.exists() {
        let text = fs::read_to_string(side)?;
        trace.meta = toml::from_str::<TraceMeta>(&text).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    Ok(trace)
}

pub fn write_trace_csv(path: &Path, trace: &EMTrace) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t_s,volt")?;
    for (i, v) in trace.samples.iter().enumerate() {
        writeln!(w, "{},{}", i as f64 / trace.sample_rate, v)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let t = EMTrace::new(48_000.0, vec![1.0, -0.5]).unwrap();
        let bytes = encode_trace(&t);
        assert_eq!(&bytes[..4], b"EMT1");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..14], &48_000f64.to_le_bytes());
        assert_eq!(&bytes[14..22], &2u64.to_le_bytes());
        assert_eq!(&bytes[22..26], &1f32.to_le_bytes());
        assert_eq!(bytes.len(), 30);
        assert_eq!(decode_trace(&bytes).unwrap().samples, t.samples);
    }

    #[test]
    fn decode_errors_are_distinct() {
        let t = EMTrace::new(1_000.0, vec![0.25; 8]).unwrap();
        let mut bytes = encode_trace(&t);
        assert!(matches!(decode_trace(&bytes[..bytes.len() - 1]), Err(Error::Corrupt(_))));
        assert!(matches!(decode_trace(&bytes[..3]), Err(Error::Corrupt(_))));
        bytes[4] = 9;
        assert!(matches!(decode_trace(&bytes), Err(Error::Version { found: 9, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_trace(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn file_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.emt");
        let mut t = EMTrace::new(2_000.0, vec![0.1, 0.2, 0.3]).unwrap();
        t.meta.device = "iphone-x".into();
        t.meta.seed = 7;
        t.meta.snr_db = Some(20.0);
        write_trace(&path, &t).unwrap();
        assert_eq!(read_trace(&path).unwrap(), t);
        let csv_path = dir.path().join("a.csv");
        write_trace_csv(&csv_path, &t).unwrap();
        let csv = fs::read_to_string(csv_path).unwrap();
        assert!(csv.starts_with("t_s,volt\n0,0.1\n"));
    }
}
