//! Binary feature files.
//!
//! Layout, all little-endian: the 8 magic bytes `SSMPFEAT`, a `u32`
//! version (1), `u32` rows, `u32` cols, then `rows * cols` `f32` values in
//! row-major order. Nothing may follow the payload.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::ShotMatrix;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"SSMPFEAT";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 3 * 4;

pub fn write_features<W: Write>(mut w: W, m: &ShotMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&dim_u32(m.rows())?.to_le_bytes());
    buf.extend_from_slice(&dim_u32(m.cols())?.to_le_bytes());
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<ShotMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save_features(path: impl AsRef<Path>, m: &ShotMatrix) -> Result<()> {
    let mut buf = Vec::new();
    write_features(&mut buf, m)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<ShotMatrix> {
    decode(&fs::read(path)?)
}

fn dim_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} does not fit in u32")))
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn decode(bytes: &[u8]) -> Result<ShotMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "feature file truncated: {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..8] != FEATURE_MAGIC {
        return Err(Error::Format("bad magic, expected SSMPFEAT".into()));
    }
    let version = u32_at(bytes, 8);
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!(
            "unsupported feature file version {version}, expected {FEATURE_VERSION}"
        )));
    }
    let rows = u32_at(bytes, 12) as usize;
    let cols = u32_at(bytes, 16) as usize;
    let expected = (rows as u64) * (cols as u64) * 4 + HEADER_LEN as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Format(format!(
            "payload length mismatch: header implies {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("feature payload contains non-finite values".into()));
    }
    ShotMatrix::new(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ShotMatrix {
        ShotMatrix::new(3, 4, (0..12).map(|v| v as f32 * 0.25 - 1.0).collect()).unwrap()
    }

    #[test]
    fn save_then_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.feat");
        save_features(&path, &sample()).unwrap();
        assert_eq!(load_features(&path).unwrap(), sample());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut buf = Vec::new();
        write_features(&mut buf, &sample()).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_features(&buf[..]), Err(Error::Format(m)) if m.contains("magic")));
    }

    #[test]
    fn version_truncation_and_trailing_bytes_are_rejected() {
        let mut buf = Vec::new();
        write_features(&mut buf, &sample()).unwrap();

        let mut wrong_version = buf.clone();
        wrong_version[8] = 2;
        assert!(read_features(&wrong_version[..]).is_err());

        assert!(read_features(&buf[..buf.len() - 1]).is_err());
        assert!(read_features(&buf[..10]).is_err());

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(read_features(&trailing[..]).is_err());
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut buf = Vec::new();
        write_features(&mut buf, &sample()).unwrap();
        buf[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(read_features(&buf[..]).is_err());
    }

    #[test]
    fn large_file_size_arithmetic() {
        let m = ShotMatrix::new(1000, 1024, vec![0.5; 1000 * 1024]).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 20 + 1000 * 1024 * 4);
        let back = read_features(&buf[..]).unwrap();
        assert_eq!((back.rows(), back.cols()), (1000, 1024));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..rows * cols).map(|_| rng.random_range(0.1f32..10.0)).collect();
            let m = ShotMatrix::new(rows, cols, data).unwrap();
            let mut a = Vec::new();
            write_features(&mut a, &m).unwrap();
            let mut b = Vec::new();
            write_features(&mut b, &read_features(&a[..]).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
