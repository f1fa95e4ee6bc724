//! `KWSM` tensor archive.
//!
//! Layout, all integers little-endian:
//! `b"KWSM"`, version `u32`, entry count `u64`, then per entry: name length
//! `u64`, UTF-8 name bytes, rank `u64`, `rank` dims as `u64`, and
//! `prod(dims)` values as `f32`.

use std::path::Path;

use super::Tensor;
use crate::error::{KwsError, Result};

pub const MAGIC: &[u8; 4] = b"KWSM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    entries: Vec<(String, Tensor)>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(KwsError::Checkpoint(format!("duplicate entry `{name}`")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| KwsError::Checkpoint(format!("missing entry `{name}`")))
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u64).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(KwsError::Checkpoint("bad magic, not a KWSM archive".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(KwsError::Checkpoint(format!("unsupported format version {version}")));
        }
        let count = r.u64()?;
        let mut archive = Archive::new();
        for _ in 0..count {
            let len = r.u64()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| KwsError::Checkpoint("entry name is not UTF-8".into()))?;
            let rank = r.u64()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| KwsError::Checkpoint("dimension overflow".into()))?;
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| KwsError::Checkpoint("size overflow".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            archive.push(name, Tensor::new(dims, data)?)?;
        }
        if r.pos != bytes.len() {
            return Err(KwsError::Checkpoint("trailing bytes after last entry".into()));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| KwsError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(KwsError::Checkpoint("truncated archive".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut a = Archive::new();
        a.push("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()).unwrap();
        let b = a.to_bytes();
        assert_eq!(&b[..4], b"KWSM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 1);
        assert_eq!(b.len(), 4 + 4 + 8 + 8 + 1 + 8 + 8 + 2 * 4);
    }

    #[test]
    fn rejects_unknown_version_and_truncation() {
        let mut a = Archive::new();
        a.push("w", Tensor::zeros(vec![3])).unwrap();
        let mut b = a.to_bytes();
        assert!(Archive::from_bytes(&b[..b.len() - 1]).is_err());
        b[4] = 2;
        let err = Archive::from_bytes(&b).unwrap_err();
        assert!(err.to_string().contains("version"));
        assert!(Archive::from_bytes(b"NOPE").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_f32_exact(values in proptest::collection::vec(-1e3f32..1e3, 1..40), split in 1usize..4) {
            let n = values.len();
            let rows = if n % split == 0 { split } else { 1 };
            let data: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let mut a = Archive::new();
            a.push("layer.w", Tensor::new(vec![rows, n / rows], data).unwrap()).unwrap();
            a.push("s", Tensor::scalar(3.0)).unwrap();
            let back = Archive::from_bytes(&a.to_bytes()).unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
