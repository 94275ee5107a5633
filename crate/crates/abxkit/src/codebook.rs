//! `KMB1` codebook files and unit-sequence text export.
//!
//! Layout (little-endian): magic `KMB1`, version `u32 = 1`, k `u32`,
//! dim `u32`, seed `i64`, inertia `f64`, then `k × dim` `f32` centroids.

use std::fs;
use std::io::Write;
use std::path::Path;

use abxkit_core::quantize::{Codebook, UnitSequence};

use crate::error::{data_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"KMB1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

pub fn encode_codebook(cb: &Codebook) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + cb.centroids().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cb.k() as u32).to_le_bytes());
    out.extend_from_slice(&(cb.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(cb.seed() as i64).to_le_bytes());
    out.extend_from_slice(&cb.inertia().to_le_bytes());
    for &c in cb.centroids() {
        out.extend_from_slice(&(c as f32).to_le_bytes());
    }
    out
}

/// Centroids come back at `f32` precision.
pub fn decode_codebook(bytes: &[u8]) -> Result<Codebook> {
    if bytes.len() < HEADER_LEN {
        return Err(data_err!("truncated codebook ({} bytes)", bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err(data_err!("bad magic, not a KMB1 codebook"));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(data_err!("unsupported codebook version {version}"));
    }
    let k = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    let seed = i64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let inertia = f64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes"));
    let expected = HEADER_LEN + k * dim * 4;
    if bytes.len() != expected {
        return Err(data_err!(
            "codebook has {} bytes, expected {expected}",
            bytes.len()
        ));
    }
    let centroids = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(Codebook::from_parts(
        k,
        dim,
        centroids,
        inertia,
        seed as u64,
    )?)
}

pub fn write_codebook(cb: &Codebook, path: &Path) -> Result<()> {
    fs::write(path, encode_codebook(cb)).map_err(|e| Error::io(path, e))
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_codebook(&bytes).map_err(|e| data_err!("{}: {e}", path.display()))
}

/// One line per utterance: `utt_id u0 u1 u2 ...`.
pub fn write_units<W: Write>(units: &[UnitSequence], mut w: W) -> std::io::Result<()> {
    for u in units {
        write!(w, "{}", u.utterance_id)?;
        for v in &u.units {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_at_f32_precision() {
        let cb = Codebook::from_parts(2, 3, vec![0.5, -1.25, 3.0, 1.0, 2.0, 4.0], 7.5, 42).unwrap();
        let bytes = encode_codebook(&cb);
        assert_eq!(bytes.len(), HEADER_LEN + 24);
        let back = decode_codebook(&bytes).unwrap();
        assert_eq!(back.centroids(), cb.centroids());
        assert_eq!(
            (back.k(), back.dim(), back.seed(), back.inertia()),
            (2, 3, 42, 7.5)
        );
        assert!(decode_codebook(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_codebook(&bad).is_err());
    }

    #[test]
    fn units_text() {
        let mut out = Vec::new();
        write_units(
            &[UnitSequence {
                utterance_id: "u1".into(),
                units: vec![3, 0, 0],
            }],
            &mut out,
        )
        .unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "u1 3 0 0\n");
    }
}
