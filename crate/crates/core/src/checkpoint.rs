//! Binary container for named tensors plus a JSON header.
//!
//! Layout (all integers little-endian):
//!
//! | field        | type                      |
//! |--------------|---------------------------|
//! | magic        | 8 bytes                   |
//! | version      | u32 (= 1)                 |
//! | scalar width | u32 (4 = f32, 8 = f64)    |
//! | meta length  | u32                       |
//! | meta         | UTF-8 JSON                |
//! | count        | u32                       |
//! | tensors      | `count` records           |
//!
//! Each tensor record is `name_len: u32`, `name: UTF-8`, `rank: u32`,
//! `dims: u64 × rank`, then `product(dims)` IEEE-754 values of the scalar width.

use std::path::Path;

use sonnet_numerics::{Real, Tensor};

use crate::error::{io, Error, Result};
use crate::model::{ModelConfig, ParamStore, SonnetModel};

pub const MODEL_MAGIC: &[u8; 8] = b"SONNETCK";
pub const STATE_MAGIC: &[u8; 8] = b"SONNETTS";
pub const VERSION: u32 = 1;

/// Decoded container with tensors widened to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub scalar_bytes: u32,
    pub meta: String,
    pub tensors: Vec<(String, Tensor<f64>)>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode<T: Real>(magic: &[u8; 8], meta: &str, tensors: &[(&str, &Tensor<T>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, T::BYTES as u32);
    put_u32(&mut out, meta.len() as u32);
    out.extend_from_slice(meta.as_bytes());
    put_u32(&mut out, tensors.len() as u32);
    for (name, t) in tensors {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn decode(magic: &[u8; 8], bytes: &[u8]) -> Result<Container> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != magic {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let scalar_bytes = r.u32()?;
    if scalar_bytes != 4 && scalar_bytes != 8 {
        return Err(Error::Checkpoint(format!("unsupported scalar width {scalar_bytes}")));
    }
    let meta_len = r.u32()? as usize;
    let meta = r.string(meta_len)?;
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = r.string(name_len)?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n * scalar_bytes as usize)?;
        let data = if scalar_bytes == 8 {
            raw.chunks_exact(8).map(f64::read_le).collect()
        } else {
            raw.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect()
        };
        let t = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        tensors.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Container {
        scalar_bytes,
        meta,
        tensors,
    })
}

impl<T: Real> SonnetModel<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_string(&self.config).expect("config serialises");
        let tensors: Vec<(&str, &Tensor<T>)> = self.params.iter().collect();
        encode(MODEL_MAGIC, &meta, &tensors)
    }

    /// Decodes a checkpoint of either scalar width into this model's scalar type.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = decode(MODEL_MAGIC, bytes)?;
        let config: ModelConfig =
            serde_json::from_str(&c.meta).map_err(|e| Error::Checkpoint(format!("config header: {e}")))?;
        let params = ParamStore::new(c.tensors.into_iter().map(|(n, t)| (n, t.cast())).collect());
        SonnetModel::from_params(config, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_bytes()).map_err(io(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(io(path))?;
        Self::from_bytes(&bytes)
    }
}
