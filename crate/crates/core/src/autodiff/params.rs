//! Named parameter storage and the checkpoint file format.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! b"OCGPARAM"  u32 version  u32 count
//! count × { u32 name_len, name (utf-8), u32 rows, u32 cols, rows·cols × f64 }
//! ```
//!
//! Entries are written sorted by name, so two stores with equal contents
//! always serialize to identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::Tensor;
use super::AutodiffError;

const MAGIC: &[u8; 8] = b"OCGPARAM";
const VERSION: u32 = 1;

static NEXT_STORE_KEY: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
pub struct ParamStore {
    key: u64,
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.values == other.values
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            key: NEXT_STORE_KEY.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub(crate) fn key(&self) -> u64 {
        self.key
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.values.len());
        let (r, c) = value.shape();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        self.grads.push(Tensor::zeros(r, c));
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.scale_in_place(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.values.len() as u32).to_le_bytes())?;
        for (name, id) in &self.index {
            let v = &self.values[id.0];
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(v.rows() as u32).to_le_bytes())?;
            w.write_all(&(v.cols() as u32).to_le_bytes())?;
            for x in v.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.num_scalars() * 8);
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads a checkpoint. Parameters come back in name order.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self, AutodiffError> {
        let bad = |m: &str| AutodiffError::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a parameter checkpoint"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(&mut r)?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(|_| bad("truncated name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("parameter name is not utf-8"))?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 8];
            for _ in 0..rows * cols {
                r.read_exact(&mut buf).map_err(|_| bad("truncated data"))?;
                data.push(f64::from_le_bytes(buf));
            }
            if store.id(&name).is_some() {
                return Err(bad(&format!("duplicate parameter {name}")));
            }
            store.add(name, Tensor::new(rows, cols, data)?);
        }
        Ok(store)
    }

    /// Copies values from `other` by name. Shapes and name sets must match.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<(), AutodiffError> {
        if other.len() != self.len() {
            return Err(AutodiffError::Checkpoint(format!(
                "expected {} parameters, checkpoint has {}",
                self.len(),
                other.len()
            )));
        }
        for (name, &id) in &self.index {
            let src = other
                .id(name)
                .ok_or_else(|| AutodiffError::Checkpoint(format!("checkpoint lacks {name}")))?;
            let v = other.value(src);
            if v.shape() != self.values[id.0].shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "load_values",
                    left: self.values[id.0].shape(),
                    right: v.shape(),
                });
            }
            self.values[id.0] = v.clone();
        }
        Ok(())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, AutodiffError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| AutodiffError::Checkpoint("truncated integer".into()))?;
    Ok(u32::from_le_bytes(buf))
}
