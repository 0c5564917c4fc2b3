//! `CUE1` checkpoint files: magic, u32 LE header length, JSON header, then
//! every array as row-major f32 LE.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::{DenseArray, Parameterized};

pub const MAGIC: &[u8; 4] = b"CUE1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model_kind: String,
    arrays: Vec<ArrayEntry>,
    config: serde_json::Value,
    meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_kind: String,
    /// Full effective configuration of the run that produced the model.
    pub config: serde_json::Value,
    /// Model-specific extras (normalizer, trained-item mask, ...).
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, DenseArray)>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn from_model(
        model_kind: &str,
        config: serde_json::Value,
        meta: serde_json::Value,
        model: &impl Parameterized,
    ) -> Self {
        Self {
            model_kind: model_kind.into(),
            config,
            meta,
            arrays: model
                .named_arrays()
                .into_iter()
                .map(|(n, a)| (n, a.clone()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&DenseArray> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| corrupt(format!("no array named {name:?}")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.model_kind != kind {
            return Err(Error::Validation(format!(
                "checkpoint holds a {:?} model, expected {kind:?}",
                self.model_kind
            )));
        }
        Ok(())
    }

    /// Copies arrays into `model`, matching names and shapes exactly.
    pub fn load_into(&self, model: &mut impl Parameterized) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = model
            .named_arrays()
            .into_iter()
            .map(|(n, a)| (n, a.shape().to_vec()))
            .collect();
        if names.len() != self.arrays.len() {
            return Err(corrupt(format!(
                "model has {} arrays, checkpoint {}",
                names.len(),
                self.arrays.len()
            )));
        }
        for ((name, shape), (cname, arr)) in names.iter().zip(&self.arrays) {
            if name != cname || shape.as_slice() != arr.shape() {
                return Err(corrupt(format!(
                    "array {cname:?} {:?} does not fit model slot {name:?} {shape:?}",
                    arr.shape()
                )));
            }
        }
        for (dst, (_, src)) in model.arrays_mut().into_iter().zip(&self.arrays) {
            *dst = src.clone();
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut offset = 0;
        let entries = self
            .arrays
            .iter()
            .map(|(name, a)| {
                let e = ArrayEntry {
                    name: name.clone(),
                    shape: a.shape().to_vec(),
                    offset,
                };
                offset += 4 * a.len();
                e
            })
            .collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            model_kind: self.model_kind.clone(),
            arrays: entries,
            config: self.config.clone(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let len = u32::try_from(json.len()).map_err(|_| corrupt("header too large"))?;
        let mut buf = Vec::with_capacity(8 + json.len() + offset);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, a) in &self.arrays {
            for &v in a.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        w.write_all(&buf)
            .map_err(|e| corrupt(format!("write failed: {e}")))
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| corrupt(format!("read failed: {e}")))?;
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing CUE1 magic"));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = bytes.get(8..8 + len).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        if header.format_version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let payload = &bytes[8 + len..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        let mut expected = 0;
        for e in header.arrays {
            let n: usize = e.shape.iter().product();
            if e.offset != expected {
                return Err(corrupt(format!("array {:?} at unexpected offset", e.name)));
            }
            let raw = payload
                .get(e.offset..e.offset + 4 * n)
                .ok_or_else(|| corrupt(format!("array {:?} truncated", e.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            expected += 4 * n;
            let a = DenseArray::new(e.shape, data).map_err(|err| corrupt(err.to_string()))?;
            arrays.push((e.name, a));
        }
        if expected != payload.len() {
            return Err(corrupt("trailing bytes after payload"));
        }
        Ok(Self {
            model_kind: header.model_kind,
            config: header.config,
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f))
    }
}
