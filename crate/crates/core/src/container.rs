//! Versioned binary container shared by spectrograms, activations, targets
//! and network weights.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ADSR" | version: u32 | dtype: u32 | [manifest_len: u64 | manifest JSON]
//!        | ndim: u32 | dims: u64 * ndim | payload (row-major)
//! ```
//!
//! The manifest block is present only when bit 7 of `dtype` is set
//! (weight files). The low bits select the payload element type.

use std::io::Write;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ADSR";
pub const VERSION: u32 = 1;

const MANIFEST_FLAG: u32 = 0x80;
const MAX_DIMS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 1,
    F64 = 2,
}

impl DType {
    fn from_tag(tag: u32, offset: usize) -> Result<Self> {
        match tag & !MANIFEST_FLAG {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            other => Err(Error::parse(offset, format!("unknown dtype tag {other}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> DType {
        match self {
            Payload::F32(_) => DType::F32,
            Payload::F64(_) => DType::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub manifest: Option<String>,
    pub dims: Vec<u64>,
    pub payload: Payload,
}

impl Container {
    pub fn new(dims: Vec<u64>, payload: Payload) -> Result<Self> {
        let expected: u64 = dims.iter().product();
        if expected != payload.len() as u64 {
            return Err(Error::dimension(format!(
                "dims {dims:?} describe {expected} elements but payload has {}",
                payload.len()
            )));
        }
        Ok(Container {
            manifest: None,
            dims,
            payload,
        })
    }

    pub fn with_manifest(mut self, manifest: String) -> Self {
        self.manifest = Some(manifest);
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.payload.len() * self.payload.dtype().width());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let mut tag = self.payload.dtype() as u32;
        if self.manifest.is_some() {
            tag |= MANIFEST_FLAG;
        }
        w.write_all(&tag.to_le_bytes())?;
        if let Some(manifest) = &self.manifest {
            w.write_all(&(manifest.len() as u64).to_le_bytes())?;
            w.write_all(manifest.as_bytes())?;
        }
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        match &self.payload {
            Payload::F32(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            Payload::F64(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::parse(0, format!("bad magic {magic:?}, expected \"ADSR\"")));
        }
        let version_at = r.pos;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::parse(version_at, format!("unsupported format version {version}")));
        }
        let tag_at = r.pos;
        let tag = r.u32("dtype")?;
        let dtype = DType::from_tag(tag, tag_at)?;
        let manifest = if tag & MANIFEST_FLAG != 0 {
            let len_at = r.pos;
            let len = r.u64("manifest length")?;
            let len = usize::try_from(len)
                .ok()
                .filter(|&l| l <= r.remaining())
                .ok_or_else(|| Error::parse(len_at, format!("manifest length {len} exceeds file size")))?;
            let text_at = r.pos;
            let text = r.take(len, "manifest")?;
            let text = std::str::from_utf8(text)
                .map_err(|e| Error::parse(text_at + e.valid_up_to(), "manifest is not UTF-8"))?;
            Some(text.to_owned())
        } else {
            None
        };
        let ndim_at = r.pos;
        let ndim = r.u32("ndim")?;
        if ndim > MAX_DIMS {
            return Err(Error::parse(ndim_at, format!("{ndim} dimensions exceeds the maximum {MAX_DIMS}")));
        }
        let mut dims = Vec::with_capacity(ndim as usize);
        for _ in 0..ndim {
            dims.push(r.u64("dimension")?);
        }
        let payload_at = r.pos;
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|c| usize::try_from(c).ok())
            .ok_or_else(|| Error::parse(ndim_at, format!("dims {dims:?} overflow")))?;
        let need = count
            .checked_mul(dtype.width())
            .ok_or_else(|| Error::parse(ndim_at, "payload size overflows"))?;
        if r.remaining() != need {
            return Err(Error::parse(
                payload_at,
                format!("payload is {} bytes, dims {dims:?} require {need}", r.remaining()),
            ));
        }
        let raw = r.take(need, "payload")?;
        let payload = match dtype {
            DType::F32 => Payload::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => Payload::F64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Container {
            manifest,
            dims,
            payload,
        })
    }

    /// Payload as `f32`, failing for other dtypes.
    pub fn into_f32(self) -> Result<(Vec<u64>, Vec<f32>)> {
        match self.payload {
            Payload::F32(v) => Ok((self.dims, v)),
            Payload::F64(_) => Err(Error::dimension("expected a 32-bit float payload, found 64-bit")),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::parse(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}
