//! Versioned binary container of named arrays, shared by the persisted models.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      7 bytes   e.g. "RPLGMM1"
//! version    u32
//! n_entries  u32
//! entry*     name_len u16, name (UTF-8), tag u8, payload
//!   tag 0    f64 array: ndim u8, dims u64 x ndim, data f64 x prod(dims)
//!   tag 1    string list: count u32, (len u32, UTF-8 bytes) x count
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Array { shape: Vec<usize>, data: Vec<f64> },
    Strings(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    magic: [u8; 7],
    entries: BTreeMap<String, Value>,
}

impl Container {
    pub fn new(magic: &[u8; 7]) -> Self {
        Self {
            magic: *magic,
            entries: BTreeMap::new(),
        }
    }

    pub fn put_array(&mut self, name: &str, shape: &[usize], data: Vec<f64>) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch for {name}");
        self.entries.insert(
            name.to_string(),
            Value::Array {
                shape: shape.to_vec(),
                data,
            },
        );
    }

    pub fn put_scalar(&mut self, name: &str, value: f64) {
        self.put_array(name, &[], vec![value]);
    }

    pub fn put_strings(&mut self, name: &str, values: Vec<String>) {
        self.entries.insert(name.to_string(), Value::Strings(values));
    }

    fn missing(&self, name: &str) -> Error {
        Error::CorruptFile(format!(
            "{} container lacks entry {name:?}",
            String::from_utf8_lossy(&self.magic)
        ))
    }

    pub fn array(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.entries.get(name) {
            Some(Value::Array { shape, data }) => Ok((shape, data)),
            _ => Err(self.missing(name)),
        }
    }

    /// Fetches a 2-D array as (rows, cols, data).
    pub fn matrix(&self, name: &str) -> Result<(usize, usize, &[f64])> {
        let (shape, data) = self.array(name)?;
        match shape {
            [r, c] => Ok((*r, *c, data)),
            _ => Err(Error::CorruptFile(format!("entry {name:?} is not a matrix"))),
        }
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let (shape, data) = self.array(name)?;
        if shape.is_empty() && data.len() == 1 {
            Ok(data[0])
        } else {
            Err(Error::CorruptFile(format!("entry {name:?} is not a scalar")))
        }
    }

    pub fn strings(&self, name: &str) -> Result<&[String]> {
        match self.entries.get(name) {
            Some(Value::Strings(v)) => Ok(v),
            _ => Err(self.missing(name)),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, value) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match value {
                Value::Array { shape, data } => {
                    out.push(0);
                    out.push(shape.len() as u8);
                    for &d in shape {
                        out.extend_from_slice(&(d as u64).to_le_bytes());
                    }
                    for &v in data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Value::Strings(items) => {
                    out.push(1);
                    out.extend_from_slice(&(items.len() as u32).to_le_bytes());
                    for s in items {
                        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                        out.extend_from_slice(s.as_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(expected_magic: &[u8; 7], bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(7)?;
        if magic != expected_magic {
            return Err(Error::UnsupportedFormat(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(expected_magic),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = r.u32()?;
        if version != CONTAINER_VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "container version {version} (supported: {CONTAINER_VERSION})"
            )));
        }
        let n = r.u32()? as usize;
        let mut entries = BTreeMap::new();
        for _ in 0..n {
            let name_len = r.u16()? as usize;
            let name = r.string(name_len)?;
            let value = match r.u8()? {
                0 => {
                    let ndim = r.u8()? as usize;
                    let shape = (0..ndim)
                        .map(|_| r.u64().map(|d| d as usize))
                        .collect::<Result<Vec<_>>>()?;
                    let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
                    let count = count
                        .filter(|&c| c <= r.remaining() / 8)
                        .ok_or_else(|| Error::CorruptFile(format!("entry {name:?} overruns file")))?;
                    let data = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    Value::Array { shape, data }
                }
                1 => {
                    let count = r.u32()? as usize;
                    let items = (0..count)
                        .map(|_| {
                            let len = r.u32()? as usize;
                            r.string(len)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Value::Strings(items)
                }
                tag => {
                    return Err(Error::CorruptFile(format!("unknown entry tag {tag} for {name:?}")))
                }
            };
            entries.insert(name, value);
        }
        if r.remaining() != 0 {
            return Err(Error::CorruptFile(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self {
            magic: *expected_magic,
            entries,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(expected_magic: &[u8; 7], path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(expected_magic, &bytes)
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

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::CorruptFile("container truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::CorruptFile("invalid UTF-8 in container".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(data in proptest::collection::vec(-1e300f64..1e300, 0..64),
                      labels in proptest::collection::vec("[a-z ]{0,12}", 0..5)) {
            let mut c = Container::new(b"TESTCN1");
            c.put_array("v", &[data.len()], data.clone());
            c.put_scalar("s", 3.5);
            c.put_strings("labels", labels.clone());
            let back = Container::from_bytes(b"TESTCN1", &c.to_bytes()).unwrap();
            prop_assert_eq!(back.array("v").unwrap().1, &data[..]);
            prop_assert_eq!(back.strings("labels").unwrap(), &labels[..]);
            prop_assert_eq!(back, c);
        }
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let mut c = Container::new(b"RPLGMM1");
        c.put_array("m", &[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let bytes = c.to_bytes();
        assert!(&bytes[..7] == b"RPLGMM1");
        assert!(matches!(
            Container::from_bytes(b"RPLSVM1", &bytes),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            Container::from_bytes(b"RPLGMM1", &bytes[..bytes.len() - 3]),
            Err(Error::CorruptFile(_))
        ));
        let back = Container::from_bytes(b"RPLGMM1", &bytes).unwrap();
        assert_eq!(back.matrix("m").unwrap(), (2, 2, &[1.0, 2.0, 3.0, 4.0][..]));
        assert!(back.scalar("m").is_err());
        assert!(back.strings("nope").is_err());
    }
}
