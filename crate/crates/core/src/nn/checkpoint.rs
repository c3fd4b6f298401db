//! Binary checkpoint container.
//!
//! Layout (all integers u32 little-endian):
//!
//! ```text
//! "ECNN1"
//! tensor count
//! per tensor: name length, name bytes (UTF-8), rank, extents...
//! per tensor: payload as f32 little-endian, in table order
//! metadata length, metadata bytes: `key=value` lines (UTF-8)
//! ```
//!
//! The classical baselines reuse the same container; their kind tag lives in
//! the `kind` metadata key.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::params::ParamSet;
use super::tensor::{Scalar, Tensor};
use super::NnError;

pub const MAGIC: &[u8; 5] = b"ECNN1";
const MAX_RANK: usize = 8;
const MAX_NAME: usize = 4096;

type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl StoredTensor {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f32>) -> StoredTensor {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "stored tensor shape");
        StoredTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        }
    }

    /// Bit patterns of the payload, for exact comparisons.
    pub fn bits(&self) -> Vec<u32> {
        self.data.iter().map(|x| x.to_bits()).collect()
    }

    /// Stores f64 values losslessly: each value becomes two f32 slots holding
    /// its low and high 32 bits, and the shape gains a trailing extent of 2.
    /// The slots are bit containers, not numbers.
    pub fn from_f64_bits(name: impl Into<String>, shape: &[usize], data: &[f64]) -> StoredTensor {
        let mut s = shape.to_vec();
        s.push(2);
        let words = data
            .iter()
            .flat_map(|x| {
                let b = x.to_bits();
                [f32::from_bits(b as u32), f32::from_bits((b >> 32) as u32)]
            })
            .collect();
        StoredTensor::new(name, &s, words)
    }

    /// Inverse of [`StoredTensor::from_f64_bits`].
    pub fn to_f64_bits(&self) -> Option<Vec<f64>> {
        if self.shape.last() != Some(&2) {
            return None;
        }
        Some(
            self.data
                .chunks_exact(2)
                .map(|p| f64::from_bits(p[0].to_bits() as u64 | ((p[1].to_bits() as u64) << 32)))
                .collect(),
        )
    }
}

/// Trained parameters of one epoch plus self-describing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    /// 1-based epoch index (0 for models without epochs).
    pub epoch: usize,
    pub tensors: Vec<StoredTensor>,
    /// Validation metrics, full precision.
    pub metrics: BTreeMap<String, f64>,
    /// Model kind, configuration and training digest.
    pub meta: BTreeMap<String, String>,
}

impl ModelCheckpoint {
    pub fn new(epoch: usize) -> ModelCheckpoint {
        ModelCheckpoint {
            epoch,
            tensors: Vec::new(),
            metrics: BTreeMap::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_params<T: Scalar>(epoch: usize, params: &ParamSet<T>) -> ModelCheckpoint {
        let mut cp = ModelCheckpoint::new(epoch);
        cp.tensors = params
            .iter()
            .map(|p| {
                StoredTensor::new(
                    p.name.clone(),
                    p.value.shape(),
                    p.value.data().iter().map(|x| x.to_f32().expect("finite")).collect(),
                )
            })
            .collect();
        cp
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn tensor(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Copies stored payloads into `params`, matching by name and shape.
    pub fn restore_into<T: Scalar>(&self, params: &mut ParamSet<T>) -> Result<()> {
        for p in params.iter_mut() {
            let st = self
                .tensor(&p.name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {:?}", p.name)))?;
            if st.shape != p.value.shape() {
                return Err(NnError::Checkpoint(format!(
                    "tensor {:?}: stored shape {:?}, model expects {:?}",
                    p.name,
                    st.shape,
                    p.value.shape()
                )));
            }
            for (d, &s) in p.value.data_mut().iter_mut().zip(&st.data) {
                *d = T::from_f32(s).expect("finite");
            }
        }
        Ok(())
    }

    /// Stored tensor converted to the engine precision.
    pub fn tensor_as<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        let st = self
            .tensor(name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name:?}")))?;
        Tensor::new(&st.shape, st.data.iter().map(|&x| T::from_f32(x).expect("finite")).collect())
    }

    fn metadata_text(&self) -> String {
        let mut out = format!("epoch={}\n", self.epoch);
        for (k, v) in &self.metrics {
            out.push_str(&format!("metric.{k}={v}\n"));
        }
        for (k, v) in &self.meta {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') || k == "epoch" || k.starts_with("metric.") {
                return Err(NnError::Checkpoint(format!("invalid metadata entry {k:?}")));
            }
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.tensors.len())?;
        for t in &self.tensors {
            put_u32(&mut out, t.name.len())?;
            out.extend_from_slice(t.name.as_bytes());
            put_u32(&mut out, t.shape.len())?;
            for &e in &t.shape {
                put_u32(&mut out, e)?;
            }
        }
        for t in &self.tensors {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let meta = self.metadata_text();
        put_u32(&mut out, meta.len())?;
        out.extend_from_slice(meta.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelCheckpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(NnError::Checkpoint("bad magic bytes".into()));
        }
        let count = r.u32()?;
        // each table entry needs at least 8 bytes
        if count.saturating_mul(8) > r.remaining() {
            return Err(NnError::Checkpoint(format!("corrupt shape table: {count} tensors")));
        }
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()?;
            if name_len > MAX_NAME {
                return Err(NnError::Checkpoint(format!("corrupt shape table: name length {name_len}")));
            }
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| NnError::Checkpoint("corrupt shape table: name not UTF-8".into()))?
                .to_string();
            let rank = r.u32()?;
            if rank > MAX_RANK {
                return Err(NnError::Checkpoint(format!("corrupt shape table: rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            table.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, shape) in table {
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .filter(|n| n.saturating_mul(4) <= r.remaining())
                .ok_or_else(|| NnError::Checkpoint(format!("truncated payload for {name:?}")))?;
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(StoredTensor { name, shape, data });
        }
        let meta_len = r.u32()?;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| NnError::Checkpoint("metadata not UTF-8".into()))?;
        if r.remaining() != 0 {
            return Err(NnError::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        let mut cp = ModelCheckpoint::new(0);
        cp.tensors = tensors;
        for line in meta.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| NnError::Checkpoint(format!("bad metadata line {line:?}")))?;
            if k == "epoch" {
                cp.epoch = v
                    .parse()
                    .map_err(|_| NnError::Checkpoint(format!("bad epoch {v:?}")))?;
            } else if let Some(m) = k.strip_prefix("metric.") {
                let x: f64 = v
                    .parse()
                    .map_err(|_| NnError::Checkpoint(format!("bad metric value {v:?}")))?;
                cp.metrics.insert(m.to_string(), x);
            } else {
                cp.meta.insert(k.to_string(), v.to_string());
            }
        }
        Ok(cp)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| NnError::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
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
            return Err(NnError::Checkpoint(format!(
                "truncated file: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn save_checkpoint(cp: &ModelCheckpoint, path: &Path) -> Result<()> {
    let bytes = cp.to_bytes()?;
    fs::write(path, bytes).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = fs::read(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
    ModelCheckpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelCheckpoint {
        let mut cp = ModelCheckpoint::new(3);
        cp.tensors.push(StoredTensor::new("w", &[2, 3], vec![0.1, -0.0, f32::MIN_POSITIVE, 1e30, -7.25, 3.0]));
        cp.tensors.push(StoredTensor::new("b", &[3], vec![0.0, 1.0, 2.0]));
        cp.metrics.insert("f1_p".into(), 0.8123456789012345);
        cp.meta.insert("kind".into(), "char_aux".into());
        cp
    }

    #[test]
    fn f64_payloads_survive_the_container() {
        let xs = [0.1f64, -1e-300, f64::MAX, 1.0 / 3.0, -0.0, f64::from_bits(0x7ff8_0000_0000_0001)];
        let mut cp = ModelCheckpoint::new(0);
        cp.tensors.push(StoredTensor::from_f64_bits("x", &[6], &xs));
        let back = ModelCheckpoint::from_bytes(&cp.to_bytes().unwrap()).unwrap();
        let ys = back.tensors[0].to_f64_bits().unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ys), bits(&xs));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cp = sample();
        let back = ModelCheckpoint::from_bytes(&cp.to_bytes().unwrap()).unwrap();
        assert_eq!(back, cp);
        for (a, b) in back.tensors.iter().zip(&cp.tensors) {
            assert_eq!(a.bits(), b.bits());
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(&bytes[..5], b"ECNN1");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 2);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelCheckpoint::from_bytes(&bad).unwrap_err().to_string().contains("magic"));
        for cut in [3, 9, 20, bytes.len() - 1] {
            assert!(ModelCheckpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = bytes.clone();
        // rank of the first tensor
        let rank_at = 5 + 4 + 4 + 1;
        bad[rank_at..rank_at + 4].copy_from_slice(&99u32.to_le_bytes());
        assert!(ModelCheckpoint::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad.push(0);
        assert!(ModelCheckpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn rejects_metadata_with_newlines() {
        let mut cp = sample();
        cp.meta.insert("x".into(), "a\nb".into());
        assert!(cp.to_bytes().is_err());
    }
}
