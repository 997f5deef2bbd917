use std::collections::BTreeMap;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Learnable parameters by name. Iteration order is the sorted name order,
/// which keeps checkpoints and optimizer updates deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Number of named tensors.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Sets every parameter to zero.
    pub fn zero(&mut self) {
        for t in self.params.values_mut() {
            t.data_mut().fill(0.0);
        }
    }

    /// Places every parameter on `tape`, tracked or as constants.
    pub fn bind(&self, tape: &mut Tape, tracked: bool) -> Result<BoundParams> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.params {
            let v = if tracked {
                tape.leaf(t.clone())?
            } else {
                tape.constant(t.clone())?
            };
            vars.insert(name.clone(), v);
        }
        Ok(BoundParams { vars })
    }

    /// Copies `other`'s entries in under `prefix`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: &ParamStore) {
        for (name, t) in &other.params {
            self.params.insert(format!("{prefix}{name}"), t.clone());
        }
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn extract_prefixed(&self, prefix: &str) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
                .collect(),
        }
    }

    /// Errors unless `self` has exactly the names (and shapes) of `expected`.
    pub fn check_matches(&self, expected: &ParamStore) -> Result<()> {
        for (name, t) in &expected.params {
            match self.params.get(name) {
                None => return Err(Error::MissingParameter(name.clone())),
                Some(have) if have.shape() != t.shape() => {
                    return Err(Error::ShapeMismatch {
                        op: "parameter",
                        expected: t.shape().to_vec(),
                        got: have.shape().to_vec(),
                    })
                }
                _ => {}
            }
        }
        if let Some(extra) = self.params.keys().find(|n| !expected.params.contains_key(*n)) {
            return Err(Error::UnexpectedParameter(extra.clone()));
        }
        Ok(())
    }
}

/// Parameters placed on one tape.
#[derive(Clone, Debug, Default)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Collects gradients from the tape into a store keyed like the parameters.
    /// Parameters the loss never reached get zero gradients.
    pub fn grads(&self, tape: &Tape) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        for (name, &v) in &self.vars {
            let g = match tape.grad(v)? {
                Some(g) => g.clone(),
                None => Tensor::zeros(tape.value(v)?.shape())?,
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }
}
