//! Named dense parameter arrays with paired gradient buffers, and the binary
//! checkpoint container.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! b"RNUM1" | u32 manifest_len | manifest (UTF-8) | f64 payload
//! ```
//!
//! The manifest has one line per array: `name<TAB>d0,d1,..<TAB>offset`, where
//! `offset` counts f64 elements from the start of the payload.

use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"RNUM1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a zero-initialized array.
    pub fn add(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Shape(format!("duplicate parameter `{name}`")));
        }
        let n: usize = shape.iter().product();
        let id = self.params.len();
        self.params.push(Param {
            name: name.to_owned(),
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
        });
        self.index.insert(name.to_owned(), id);
        Ok(ParamId(id))
    }

    pub fn add_normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut Rng) -> Result<ParamId> {
        let id = self.add(name, shape)?;
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in self.params[id.0].value.iter_mut() {
                *v = normal.sample(rng);
            }
        }
        Ok(id)
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)) for a `[rows, cols]` matrix.
    pub fn add_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut Rng) -> Result<ParamId> {
        let id = self.add(name, &[rows, cols])?;
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        for v in self.params[id.0].value.iter_mut() {
            *v = rng.random_range(-limit..limit);
        }
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar coordinates.
    pub fn n_coords(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds `other`'s gradients into this store. Layouts must match.
    pub fn accumulate_grads(&mut self, other: &ParamStore) -> Result<()> {
        self.check_same_layout(other)?;
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            for (g, h) in p.grad.iter_mut().zip(&q.grad) {
                *g += h;
            }
        }
        Ok(())
    }

    pub fn check_same_layout(&self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Shape(format!(
                "parameter count mismatch: {} vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (p, q) in self.params.iter().zip(&other.params) {
            if p.name != q.name || p.shape != q.shape {
                return Err(Error::Shape(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    p.name, p.shape, q.name, q.shape
                )));
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.value.iter().chain(&p.grad).all(|v| v.is_finite()))
    }

    /// Flat coordinate `i` as `(param, offset)`.
    pub fn locate(&self, mut i: usize) -> Option<(ParamId, usize)> {
        for (k, p) in self.params.iter().enumerate() {
            if i < p.len() {
                return Some((ParamId(k), i));
            }
            i -= p.len();
        }
        None
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        let mut manifest = String::new();
        let mut offset = 0usize;
        for p in &self.params {
            let dims: Vec<String> = p.shape.iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!("{}\t{}\t{}\n", p.name, dims.join(","), offset));
            offset += p.len();
        }
        let mut out = Vec::with_capacity(9 + manifest.len() + 8 * offset);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for p in &self.params {
            for v in &p.value {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<ParamStore> {
        let corrupt = |m: &str| Error::Integrity(format!("checkpoint: {m}"));
        if bytes.len() < 9 || &bytes[..5] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mlen = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
        let manifest = bytes
            .get(9..9 + mlen)
            .ok_or_else(|| corrupt("truncated manifest"))?;
        let manifest = std::str::from_utf8(manifest).map_err(|_| corrupt("manifest not UTF-8"))?;
        let payload = &bytes[9 + mlen..];
        if payload.len() % 8 != 0 {
            return Err(corrupt("payload not a whole number of f64"));
        }
        let n_values = payload.len() / 8;
        let mut store = ParamStore::new();
        for (i, line) in manifest.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "checkpoint manifest entry needs 3 fields".into(),
                });
            }
            let shape: Vec<usize> = if fields[1].is_empty() {
                Vec::new()
            } else {
                fields[1]
                    .split(',')
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("bad shape `{}`", fields[1]),
                    })?
            };
            let offset: usize = fields[2].parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad offset `{}`", fields[2]),
            })?;
            let id = store.add(fields[0], &shape)?;
            let len = store.params[id.0].len();
            if offset + len > n_values {
                return Err(corrupt(&format!("array `{}` exceeds payload", fields[0])));
            }
            for (j, v) in store.params[id.0].value.iter_mut().enumerate() {
                let at = 8 * (offset + j);
                *v = f64::from_le_bytes(payload[at..at + 8].try_into().expect("8 bytes"));
            }
        }
        Ok(store)
    }
}
