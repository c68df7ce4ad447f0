//! `LRT1` tensor container.
//!
//! A single tensor record is:
//!
//! ```text
//! b"LRT1" | rank: u32 LE | dims: rank x u32 LE | data: prod(dims) x f32 LE
//! ```
//!
//! Files holding several named tensors (model checkpoints, PCA models) use a
//! thin wrapper around those records:
//!
//! ```text
//! b"LRTS" | count: u32 LE
//! count x ( name_len: u32 LE | name: UTF-8 | LRT1 record )
//! meta_len: u32 LE | meta: UTF-8 "key=value\n" lines, sorted by key
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"LRT1";
pub const SET_MAGIC: &[u8; 4] = b"LRTS";

/// Dense row-major `f32` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(Error::InvalidInput(format!(
                "tensor dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            dims: Vec::new(),
            data: vec![value],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(TENSOR_MAGIC)?;
        out.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Decodes one record from the front of `bytes`, returning the rest.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, &[u8])> {
        let mut cur = Cursor::new(bytes);
        let magic = cur.take(4, "magic")?;
        if magic != TENSOR_MAGIC {
            return Err(Error::Format(format!("bad magic bytes {magic:?}")));
        }
        let rank = cur.u32("rank")? as usize;
        if rank > cur.remaining() / 4 {
            return Err(Error::Format(format!("truncated: rank {rank} exceeds file")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32("dimension")? as usize);
        }
        let count = element_count(&dims).map_err(|_| Error::Format(format!("dimension overflow in {dims:?}")))?;
        let payload = count
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("dimension overflow in {dims:?}")))?;
        let raw = cur.take(payload, "tensor payload")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok((Self { dims, data }, cur.rest()))
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| {
            if d > u32::MAX as usize {
                return None;
            }
            acc.checked_mul(d)
        })
        .ok_or_else(|| Error::InvalidInput(format!("tensor dims {dims:?} overflow")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Format(format!(
                "truncated while reading {what}: need {n} bytes, {} left",
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

pub fn save_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (tensor, rest) = Tensor::from_bytes(&bytes)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok(tensor)
}

/// Named tensors plus a string metadata record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorSet {
    sections: Vec<(String, Tensor)>,
    pub meta: BTreeMap<String, String>,
}

impl TensorSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a section.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.sections.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.sections.push((name, tensor)),
        }
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing section '{name}'")))
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("missing metadata key '{key}'")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("metadata '{key}' has invalid value '{raw}'")))
    }

    pub fn sections(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.sections.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(SET_MAGIC);
        buf.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, tensor) in &self.sections {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            tensor.write_to(&mut buf).expect("writing to a Vec cannot fail");
        }
        let mut meta = String::new();
        for (k, v) in &self.meta {
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(meta.as_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let magic = cur.take(4, "magic")?;
        if magic != SET_MAGIC {
            return Err(Error::Format(format!("bad magic bytes {magic:?}")));
        }
        let count = cur.u32("section count")? as usize;
        let mut set = TensorSet::new();
        for _ in 0..count {
            let len = cur.u32("name length")? as usize;
            let name = std::str::from_utf8(cur.take(len, "section name")?)
                .map_err(|_| Error::Format("section name is not UTF-8".into()))?
                .to_owned();
            let (tensor, rest) = Tensor::from_bytes(cur.rest())?;
            cur = Cursor::new(rest);
            set.sections.push((name, tensor));
        }
        let len = cur.u32("metadata length")? as usize;
        let text = std::str::from_utf8(cur.take(len, "metadata")?)
            .map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad metadata line '{line}'")))?;
            set.meta.insert(k.to_owned(), v.to_owned());
        }
        if cur.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", cur.remaining())));
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"LRT1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[20..24], &(-2.5f32).to_le_bytes());
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = Tensor::vector(vec![1.0]).to_bytes();
        bytes[3] = b'2';
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = Tensor::vector(vec![1.0, 2.0, 3.0]).to_bytes();
        for cut in 0..bytes.len() {
            assert!(Tensor::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn dim_overflow_is_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"LRT1");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn empty_tensor_round_trips() {
        let t = Tensor::new(vec![4, 0, 3], vec![]).unwrap();
        let bytes = t.to_bytes();
        let (back, rest) = Tensor::from_bytes(&bytes).unwrap();
        assert!(rest.is_empty());
        assert_eq!(back, t);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.lrt");
        let t = Tensor::new(vec![2, 3], vec![0.5, f32::MIN_POSITIVE, -0.0, 7.0, 1e30, -3.25]).unwrap();
        save_tensor(&path, &t).unwrap();
        let back = load_tensor(&path).unwrap();
        assert_eq!(
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back.dims(), t.dims());
    }

    #[test]
    fn set_round_trip_with_meta() {
        let mut set = TensorSet::new();
        set.insert("weights", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        set.insert("bias", Tensor::vector(vec![0.5, -0.5]));
        set.set_meta("epoch", 12);
        set.set_meta("kind", "lstm");
        let back = TensorSet::from_bytes(&set.to_bytes()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.meta_parse::<usize>("epoch").unwrap(), 12);
        assert!(back.require("missing").is_err());
    }

    proptest! {
        #[test]
        fn random_tensors_round_trip_bit_exact(
            dims in proptest::collection::vec(0usize..5, 0..4),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let mut rng = crate::rng::Rng::new(seed);
            let data: Vec<f32> = (0..n).map(|_| f32::from_bits(rng.next_u64() as u32)).collect();
            let t = Tensor::new(dims, data).unwrap();
            let bytes = t.to_bytes();
            let (back, rest) = Tensor::from_bytes(&bytes).unwrap();
            prop_assert!(rest.is_empty());
            prop_assert_eq!(back.dims(), t.dims());
            let a: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
