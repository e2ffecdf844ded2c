//! Binary checkpoint container.
//!
//! ```text
//! magic "CTXNMTCK" | u32 version | str dtype | str config (key=value lines)
//! u32 tensor count | per tensor: str name, u32 ndim, u64 dims…, values (LE)
//! u32 crc32 of everything before it
//! ```
//! Strings are a u32 byte length followed by UTF-8 bytes. All integers are
//! little-endian.

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CTXNMTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }
}

impl<T: Scalar> Model<T> {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.params.num_scalars() * T::BYTES);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_str(&mut out, T::DTYPE);
        put_str(&mut out, &self.config.to_kv());
        put_u32(&mut out, self.params.len() as u32);
        for (_, p) in self.params.iter() {
            put_str(&mut out, &p.name);
            put_u32(&mut out, p.shape.len() as u32);
            for &d in &p.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &p.value {
                v.write_le(&mut out);
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let dtype = r.str()?;
        if dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("stored as {dtype}, requested {}", T::DTYPE)));
        }
        let config = ModelConfig::from_kv(r.str()?)?;
        // initial values are overwritten below; the seed is irrelevant
        let mut model = Model::new(config, 0)?;
        let count = r.u32()? as usize;
        if count != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                model.params.len()
            )));
        }
        for _ in 0..count {
            let name = r.str()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let id = model
                .params
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{name}`")))?;
            if model.params.get(id).shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {shape:?}, model expects {:?}",
                    model.params.get(id).shape
                )));
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n * T::BYTES)?;
            let values = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            model.params.set_value(id, values)?;
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_checkpoint_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_bytes(&fs::read(path)?)
    }
}
