//! Self-describing binary container: magic, JSON header, little-endian arrays.
//!
//! Layout: 8-byte magic, `u64` header length, UTF-8 JSON header, payload.
//! The header lists every array (name, dtype, shape, byte offset) plus a
//! free-form `meta` object and the SHA-256 of the payload.


use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    U32(Vec<u32>),
    I64(Vec<i64>),
}

impl ArrayData {
    fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F64(_) => "f64",
            ArrayData::U32(_) => "u32",
            ArrayData::I64(_) => "i64",
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::U32(v) => v.len(),
            ArrayData::I64(v) => v.len(),
        }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    version: String,
    sha256: String,
    arrays: Vec<ArrayHeader>,
    meta: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Container {
    pub kind: String,
    pub version: String,
    pub meta: serde_json::Value,
    arrays: Vec<(String, Vec<usize>, ArrayData)>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Container {
    pub fn new(kind: &str, version: &str, meta: serde_json::Value) -> Self {
        Self { kind: kind.into(), version: version.into(), meta, arrays: Vec::new() }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], data: ArrayData) -> Result<()> {
        let n: usize = shape.iter().product();
        Error::check_dim("container array", n, data.len())?;
        self.arrays.push((name.to_string(), shape.to_vec(), data));
        Ok(())
    }

    pub fn to_bytes(&self, magic: &[u8; 8]) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut arrays = Vec::with_capacity(self.arrays.len());
        for (name, shape, data) in &self.arrays {
            arrays.push(ArrayHeader {
                name: name.clone(),
                dtype: data.dtype().into(),
                shape: shape.clone(),
                offset: payload.len(),
            });
            data.write_le(&mut payload);
        }
        let header = Header {
            kind: self.kind.clone(),
            version: self.version.clone(),
            sha256: sha256_hex(&payload),
            arrays,
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(magic);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], magic: &[u8; 8], kind: &str, version: &str) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format("file too short".into()));
        }
        if &bytes[..8] != magic {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if hlen > body.len() {
            return Err(Error::Format("truncated header".into()));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Format(e.to_string()))?;
        if header.kind != kind {
            return Err(Error::Format(format!("expected a {kind} file, found {}", header.kind)));
        }
        if header.version != version {
            return Err(Error::Version { found: header.version, expected: version.into() });
        }
        let payload = &body[hlen..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for a in &header.arrays {
            let n: usize = a.shape.iter().product();
            let width = match a.dtype.as_str() {
                "f64" | "i64" => 8,
                "u32" => 4,
                other => return Err(Error::Format(format!("unknown dtype {other}"))),
            };
            let end = a.offset + n * width;
            if end > payload.len() {
                return Err(Error::Format(format!("truncated array {}", a.name)));
            }
            let raw = &payload[a.offset..end];
            let data = match a.dtype.as_str() {
                "f64" => ArrayData::F64(
                    raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                "i64" => ArrayData::I64(
                    raw.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                _ => ArrayData::U32(
                    raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
            };
            arrays.push((a.name.clone(), a.shape.clone(), data));
        }
        if sha256_hex(payload) != header.sha256 {
            return Err(Error::Checksum);
        }
        Ok(Self { kind: header.kind, version: header.version, meta: header.meta, arrays })
    }

    fn find(&self, name: &str) -> Result<&(String, Vec<usize>, ArrayData)> {
        self.arrays
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing array {name}")))
    }

    pub fn shape(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self.find(name)?.1.clone())
    }

    pub fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        match &self.find(name)?.2 {
            ArrayData::F64(v) => Ok(v.clone()),
            _ => Err(Error::Format(format!("array {name} is not f64"))),
        }
    }

    pub fn u32s(&self, name: &str) -> Result<Vec<u32>> {
        match &self.find(name)?.2 {
            ArrayData::U32(v) => Ok(v.clone()),
            _ => Err(Error::Format(format!("array {name} is not u32"))),
        }
    }

    pub fn i64s(&self, name: &str) -> Result<Vec<i64>> {
        match &self.find(name)?.2 {
            ArrayData::I64(v) => Ok(v.clone()),
            _ => Err(Error::Format(format!("array {name} is not i64"))),
        }
    }
}
