//! Binary container for checkpoints and ground-truth files.
//!
//! Layout:
//!
//! ```text
//! PFACTCK1                      8-byte magic
//! key: value                    UTF-8 header lines
//! ...
//! array: <name> <shape> <offset> <len> <checksum>
//! end_header
//! <raw little-endian f64 data>
//! ```
//!
//! Offsets and lengths count `f64` values from the start of the data
//! section; shapes are written as `2x3`. Each array carries a truncated
//! SHA-256 of its bytes so corruption is attributed to a named entry.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PFACTCK1";
const END_HEADER: &str = "end_header";

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    header: Vec<(String, String)>,
    arrays: Vec<Array>,
}

fn checksum(data: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for v in data {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

fn format_shape(shape: &[usize]) -> String {
    if shape.is_empty() {
        return "scalar".into();
    }
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    if s == "scalar" {
        return Some(vec![]);
    }
    s.split('x').map(|p| p.parse().ok()).collect()
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a header entry. Keys and values must be single-line.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        debug_assert!(!key.contains([':', '\n']) && !value.contains('\n'));
        self.header.push((key, value));
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::CheckpointEntry {
                entry: key.into(),
                msg: "missing header key".into(),
            })
    }

    pub fn get_opt(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| Error::CheckpointEntry {
            entry: key.into(),
            msg: format!("cannot parse `{raw}`"),
        })
    }

    pub fn header(&self) -> &[(String, String)] {
        &self.header
    }

    pub fn push_array(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>().max(1), data.len().max(1));
        self.arrays.push(Array { name, shape, data });
    }

    pub fn arrays(&self) -> &[Array] {
        &self.arrays
    }

    pub fn array(&self, name: &str) -> Result<&Array> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::CheckpointEntry {
                entry: name.into(),
                msg: "missing array".into(),
            })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = String::new();
        for (k, v) in &self.header {
            head.push_str(&format!("{k}: {v}\n"));
        }
        let mut offset = 0usize;
        for a in &self.arrays {
            head.push_str(&format!(
                "array: {} {} {} {} {}\n",
                a.name,
                format_shape(&a.shape),
                offset,
                a.data.len(),
                checksum(&a.data)
            ));
            offset += a.data.len();
        }
        head.push_str(END_HEADER);
        head.push('\n');

        let mut out = Vec::with_capacity(MAGIC.len() + head.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(head.as_bytes());
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::CheckpointFormat("bad magic".into()));
        }
        let rest = &bytes[MAGIC.len()..];
        let marker = format!("\n{END_HEADER}\n");
        let end = rest
            .windows(marker.len())
            .position(|w| w == marker.as_bytes())
            .ok_or_else(|| Error::CheckpointFormat("header terminator not found".into()))?;
        let head = std::str::from_utf8(&rest[..end + 1])
            .map_err(|_| Error::CheckpointFormat("header is not UTF-8".into()))?;
        let data = &rest[end + marker.len()..];
        if !data.len().is_multiple_of(8) {
            return Err(Error::CheckpointFormat(
                "data section is not a whole number of f64 values".into(),
            ));
        }

        let mut container = Container::new();
        for (i, line) in head.lines().enumerate() {
            let (key, value) = line.split_once(": ").ok_or_else(|| {
                Error::CheckpointFormat(format!("header line {} is not `key: value`", i + 1))
            })?;
            if key != "array" {
                container.header.push((key.to_string(), value.to_string()));
                continue;
            }
            let fields: Vec<&str> = value.split(' ').collect();
            let name = fields.first().copied().unwrap_or("<unnamed>").to_string();
            let bad = |msg: &str| Error::CheckpointEntry {
                entry: name.clone(),
                msg: msg.into(),
            };
            if fields.len() != 5 {
                return Err(bad("malformed manifest line"));
            }
            let shape = parse_shape(fields[1]).ok_or_else(|| bad("malformed shape"))?;
            let offset: usize = fields[2].parse().map_err(|_| bad("malformed offset"))?;
            let len: usize = fields[3].parse().map_err(|_| bad("malformed length"))?;
            if shape.iter().product::<usize>() != len && !(shape.is_empty() && len == 1) {
                return Err(bad("shape does not match length"));
            }
            let start = offset
                .checked_mul(8)
                .ok_or_else(|| bad("offset overflow"))?;
            let stop = offset
                .checked_add(len)
                .and_then(|e| e.checked_mul(8))
                .ok_or_else(|| bad("length overflow"))?;
            if stop > data.len() {
                return Err(bad("array extends past end of file"));
            }
            let values: Vec<f64> = data[start..stop]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if checksum(&values) != fields[4] {
                return Err(bad("checksum mismatch"));
            }
            container.arrays.push(Array {
                name,
                shape,
                data: values,
            });
        }
        Ok(container)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Joins a list into a tab-separated header value.
pub fn join_list<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .map(|s| s.as_ref())
        .collect::<Vec<_>>()
        .join("\t")
}

pub fn split_list(value: &str) -> Vec<String> {
    if value.is_empty() {
        return Vec::new();
    }
    value.split('\t').map(str::to_string).collect()
}
