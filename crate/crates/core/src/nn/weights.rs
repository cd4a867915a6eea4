//! Named weight arrays and the binary weight container.
//!
//! Container layout, all integers little-endian:
//!
//! ```text
//! "TSTM"            4 bytes magic
//! version           u32 (= 1)
//! spec_len          u32, then spec_len bytes of UTF-8 JSON model spec
//! repeated until EOF:
//!   name_len        u16, then name_len bytes of UTF-8 array name
//!   rank            u8
//!   dims            rank × u32
//!   values          product(dims) × f32, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

use super::spec::{LayerKind, ModelSpec};

pub const MAGIC: &[u8; 4] = b"TSTM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightArray<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> WeightArray<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Argument(format!(
                "array of shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn cast<U: Scalar>(&self) -> WeightArray<U> {
        WeightArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }
}

/// Weight arrays keyed `"<layer>/<param>"`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore<T> {
    arrays: BTreeMap<String, WeightArray<T>>,
}

impl<T: Scalar> WeightStore<T> {
    pub fn new() -> Self {
        Self {
            arrays: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, array: WeightArray<T>) {
        self.arrays.insert(key.into(), array);
    }

    pub fn get(&self, key: &str) -> Option<&WeightArray<T>> {
        self.arrays.get(key)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightArray<T>)> {
        self.arrays.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// All-zero weights, with unit moving variance so batch norm stays finite.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let mut store = Self::new();
        for slot in spec.param_slots() {
            let mut arr = WeightArray::zeros(slot.shape);
            if slot.key.ends_with("/moving_variance") {
                arr.data.iter_mut().for_each(|v| *v = T::one());
            }
            store.insert(slot.key, arr);
        }
        store
    }

    /// Seeded He-uniform kernels with small biases and plausible batch-norm
    /// statistics. Values are drawn as f32 so every scalar type sees the same numbers.
    pub fn random(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut uniform = |lo: f64, hi: f64| (lo + (hi - lo) * rng.next_f64()) as f32;
        let mut store = Self::new();
        for slot in spec.param_slots() {
            let n: usize = slot.shape.iter().product();
            let param = slot.key.rsplit('/').next().unwrap_or_default();
            let (lo, hi) = match param {
                "kernel" => {
                    let fan_in: usize = slot.shape[..slot.shape.len() - 1].iter().product();
                    let limit = (6.0 / fan_in as f64).sqrt();
                    (-limit, limit)
                }
                "bias" => (-0.05, 0.05),
                "gamma" => (0.8, 1.2),
                "beta" | "moving_mean" => (-0.1, 0.1),
                "moving_variance" => (0.5, 1.5),
                _ => (0.0, 0.0),
            };
            let data = (0..n).map(|_| T::from_f32_lossy(uniform(lo, hi))).collect();
            store.insert(
                slot.key,
                WeightArray {
                    shape: slot.shape,
                    data,
                },
            );
        }
        store
    }

    /// Checks that the store holds exactly the arrays `spec` needs, with matching shapes.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let slots = spec.param_slots();
        for slot in &slots {
            let arr = self
                .arrays
                .get(&slot.key)
                .ok_or_else(|| Error::weights(&slot.layer, format!("missing array `{}`", slot.key)))?;
            if arr.shape != slot.shape {
                return Err(Error::weights(
                    &slot.layer,
                    format!(
                        "array `{}` has shape {:?}, expected {:?}",
                        slot.key, arr.shape, slot.shape
                    ),
                ));
            }
            if arr.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::weights(
                    &slot.layer,
                    format!("array `{}` has non-finite values", slot.key),
                ));
            }
        }
        for l in spec.layers() {
            if let LayerKind::BatchNorm { .. } = l.kind {
                let key = format!("{}/moving_variance", l.name);
                if self.arrays[&key].data.iter().any(|v| *v < T::zero()) {
                    return Err(Error::weights(&l.name, "negative moving variance"));
                }
            }
        }
        if let Some(extra) = self.arrays.keys().find(|k| !slots.iter().any(|s| &s.key == *k)) {
            let layer = extra.split('/').next().unwrap_or(extra);
            return Err(Error::weights(layer, format!("unexpected array `{extra}`")));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> WeightStore<U> {
        WeightStore {
            arrays: self.arrays.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Serializes `spec` and `weights` in spec parameter order.
pub fn encode_weights<T: Scalar>(spec: &ModelSpec, weights: &WeightStore<T>) -> Result<Vec<u8>> {
    weights.validate(spec)?;
    let json = spec.to_json();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    for slot in spec.param_slots() {
        let arr = &weights.arrays[&slot.key];
        let name = slot.key.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(arr.shape.len() as u8);
        for &d in &arr.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &arr.data {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str, layer: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::weights(
                layer,
                format!("truncated weight file while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str, layer: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what, layer)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<(ModelSpec, WeightStore<f32>)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad weight file magic".into()));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32("version", "header")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let len = cur.u32("spec length", "header")? as usize;
    let json = std::str::from_utf8(cur.take(len, "model spec", "header")?)
        .map_err(|_| Error::Format("model spec is not UTF-8".into()))?;
    let spec = ModelSpec::from_json(json)?;

    let mut store = WeightStore::new();
    while !cur.done() {
        let n = u16::from_le_bytes(cur.take(2, "array name length", "record")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(cur.take(n, "array name", "record")?)
            .map_err(|_| Error::Format("array name is not UTF-8".into()))?
            .to_string();
        let layer = name.split('/').next().unwrap_or_default().to_string();
        let rank = cur.take(1, "rank", &layer)?[0] as usize;
        let shape = (0..rank)
            .map(|_| cur.u32("dims", &layer).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::weights(&layer, "dimension overflow"))?;
        let need = count
            .checked_mul(4)
            .ok_or_else(|| Error::weights(&layer, "dimension overflow"))?;
        let raw = cur.take(need, &format!("values of `{name}`"), &layer)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if store.arrays.insert(name.clone(), WeightArray { shape, data }).is_some() {
            return Err(Error::weights(&layer, format!("duplicate array `{name}`")));
        }
    }
    store.validate(&spec)?;
    Ok((spec, store))
}

pub fn save_weights<T: Scalar>(path: &Path, spec: &ModelSpec, weights: &WeightStore<T>) -> Result<()> {
    let bytes = encode_weights(spec, weights)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<(ModelSpec, WeightStore<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}
