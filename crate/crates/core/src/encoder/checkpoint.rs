//! Model checkpoints.
//!
//! Layout, all little-endian: magic `SSMPCKPT`, `u32` version, `u32` byte
//! length of the JSON-encoded [`EncoderConfig`], the JSON bytes, then every
//! tensor in declaration order as `u32` rows, `u32` cols and `rows * cols`
//! `f32` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::params::{EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SSMPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn u32_le(n: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(n)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Format(format!("{what} {n} does not fit in u32")))
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &ModelParams) -> Result<()> {
    let config = serde_json::to_vec(&params.config)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_le(config.len(), "config length")?);
    buf.extend_from_slice(&config);
    for t in params.tensors() {
        buf.extend_from_slice(&u32_le(t.rows(), "rows")?);
        buf.extend_from_slice(&u32_le(t.cols(), "cols")?);
        for &v in t.as_slice() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    decode(&fs::read(path)?)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("checkpoint truncated at byte {}", self.bytes.len()))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad magic, expected SSMPCKPT".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let len = cur.u32()? as usize;
    let config: EncoderConfig = serde_json::from_slice(cur.take(len)?)
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    config.validate().map_err(|e| Error::Format(e.to_string()))?;

    let mut tensors = Vec::new();
    for (name, rows, cols) in ModelParams::layout(&config) {
        let (r, c) = (cur.u32()? as usize, cur.u32()? as usize);
        if (r, c) != (rows, cols) {
            return Err(Error::Format(format!(
                "tensor {name} stored as {r}x{c}, config implies {rows}x{cols}"
            )));
        }
        let data: Vec<f64> = cur
            .take(r * c * 4)?
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("tensor {name} contains non-finite values")));
        }
        tensors.push(Matrix::from_vec(r, c, data)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - cur.pos
        )));
    }
    ModelParams::from_tensors(config, tensors)
}
