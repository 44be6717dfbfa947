use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// Named parameter tensors in a fixed order.
///
/// Parameter ids are positions in this order; gradient buffers and optimizer
/// state are aligned with them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Model(format!("duplicate parameter {name}")));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    /// Adds a gaussian-initialised tensor.
    pub fn insert_gaussian(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut Rng,
    ) -> Result<usize> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gaussian() * std).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.id(name)
            .ok_or_else(|| Error::Model(format!("missing parameter {name}")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.id(name).map(move |i| &mut self.values[i])
    }

    pub fn value(&self, id: usize) -> &Tensor {
        &self.values[id]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Zero tensors shaped like every parameter.
    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.values
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect()
    }

    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        self.names
            .iter()
            .cloned()
            .zip(self.values.iter().cloned())
            .collect()
    }

    /// Replaces values from a named list; every name and shape must match.
    pub fn load_named(&mut self, named: Vec<(String, Tensor)>) -> Result<()> {
        if named.len() != self.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameters, model has {}",
                named.len(),
                self.len()
            )));
        }
        for (name, t) in named {
            let id = self
                .id(&name)
                .ok_or_else(|| Error::Format(format!("unknown parameter {name}")))?;
            if t.shape() != self.values[id].shape() {
                return Err(Error::Format(format!(
                    "parameter {name}: shape {:?} != {:?}",
                    t.shape(),
                    self.values[id].shape()
                )));
            }
            self.values[id] = t;
        }
        Ok(())
    }

    /// Copies every parameter whose name also exists in `other`.
    pub fn copy_shared_from(&mut self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for (i, name) in self.names.iter().enumerate() {
            if let Some(src) = other.get(name) {
                if src.shape() != self.values[i].shape() {
                    return Err(shape_mismatch(name, src, &self.values[i]));
                }
                self.values[i] = src.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }
}

fn shape_mismatch(name: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape(format!(
        "parameter {name}: {:?} vs {:?}",
        a.shape(),
        b.shape()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_and_lookup() {
        let mut p = ParamStore::new();
        let mut rng = Rng::new(0);
        let a = p.insert_gaussian("a", &[2, 3], 0.2, &mut rng).unwrap();
        let b = p.insert("b", Tensor::zeros(&[3])).unwrap();
        assert_eq!((a, b), (0, 1));
        assert_eq!(p.scalar_count(), 9);
        assert!(p.insert("a", Tensor::scalar(0.0)).is_err());
        assert!(p.require("c").is_err());
    }

    #[test]
    fn named_round_trip() {
        let mut rng = Rng::new(1);
        let mut p = ParamStore::new();
        p.insert_gaussian("w", &[2, 2], 1.0, &mut rng).unwrap();
        let named = p.to_named();
        let mut q = ParamStore::new();
        q.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        q.load_named(named).unwrap();
        assert_eq!(p, q);
        assert!(q
            .load_named(vec![("w".into(), Tensor::zeros(&[3]))])
            .is_err());
    }
}
