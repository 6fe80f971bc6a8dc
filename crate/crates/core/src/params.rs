//! Named parameter storage shared by the autoencoder and the denoiser.
//!
//! Parameters live as raw (shape, values) entries in name order. Each
//! training step binds them into leaf tensors (marking the trainable subset
//! as differentiation roots), runs the forward, and applies updates back by
//! name. Name order is deterministic, so update order (and therefore float
//! accumulation) is reproducible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], values: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len(), "{name}");
        self.entries.insert(name.to_string(), ParamEntry { shape: shape.to_vec(), values });
    }

    pub fn get(&self, name: &str) -> Result<&ParamEntry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingPrerequisite(format!("parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn set_values(&mut self, name: &str, values: Vec<f32>) -> Result<()> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingPrerequisite(format!("parameter {name}")))?;
        if values.len() != e.values.len() {
            return Err(Error::ShapeMismatch {
                op: "set_values",
                detail: format!("{name}: {} vs {}", values.len(), e.values.len()),
            });
        }
        e.values = values;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|e| e.values.len()).sum()
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (name, e) in &self.entries {
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    op: "params",
                    detail: format!("parameter {name} contains non-finite values"),
                });
            }
        }
        Ok(())
    }

    /// Bind every parameter into a leaf tensor; names matched by
    /// `trainable` become differentiation roots.
    pub fn bind(&self, trainable: impl Fn(&str) -> bool) -> Binding {
        let mut map = BTreeMap::new();
        for (name, e) in &self.entries {
            let t = Tensor::leaf(e.shape.clone(), e.values.clone(), false);
            let t = if trainable(name) { t.requires_grad() } else { t };
            map.insert(name.clone(), t);
        }
        Binding { map }
    }

    /// Bind with nothing trainable (inference).
    pub fn bind_frozen(&self) -> Binding {
        self.bind(|_| false)
    }
}

/// Leaf tensors for one forward pass.
pub struct Binding {
    map: BTreeMap<String, Tensor>,
}

impl Binding {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| Error::MissingPrerequisite(format!("bound parameter {name}")))
    }

    /// Swap one bound leaf (used by gradient probes in tests).
    pub fn with_replacement(mut self, name: &str, t: Tensor) -> Self {
        self.map.insert(name.to_string(), t);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.map
            .iter()
            .filter(|(_, t)| t.is_requires_grad())
            .map(|(k, _)| k.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_marks_only_selected_names_trainable() {
        let mut p = ParamSet::new();
        p.insert("base.w", &[2, 2], vec![1.0; 4]);
        p.insert("branch.w", &[2], vec![0.5; 2]);
        let b = p.bind(|n| n.starts_with("branch."));
        assert!(!b.get("base.w").unwrap().is_requires_grad());
        assert!(b.get("branch.w").unwrap().is_requires_grad());
        assert_eq!(b.trainable_names(), vec!["branch.w".to_string()]);
    }

    #[test]
    fn set_values_checks_length() {
        let mut p = ParamSet::new();
        p.insert("w", &[3], vec![0.0; 3]);
        assert!(p.set_values("w", vec![1.0; 2]).is_err());
        assert!(p.set_values("w", vec![1.0; 3]).is_ok());
        assert_eq!(p.get("w").unwrap().values, vec![1.0; 3]);
    }

    #[test]
    fn json_roundtrip_preserves_bits() {
        let mut p = ParamSet::new();
        p.insert("a", &[2], vec![0.1, -2.5e-8]);
        let s = serde_json::to_string(&p).unwrap();
        let q: ParamSet = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
