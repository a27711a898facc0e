use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Gradients, Graph, NumericError, OpResult, Tensor, Var};

/// Named parameters, iterated in name order.
///
/// Names are namespaced by owner: `phi/` for the language model, `theta/`
/// for prefix machinery, `ic/` for the irrelevance classifier.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, mut t: Tensor) {
        t.requires_grad = true;
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Moves every tensor of `other` into `self`, replacing same-named entries.
    pub fn extend(&mut self, other: ParamStore) {
        self.tensors.extend(other.tensors);
    }

    /// Sub-store with the names starting with `prefix`.
    pub fn filtered(&self, prefix: &str) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn init_normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut impl Rng) {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        self.insert(name, Tensor::from_parts(shape.to_vec(), data));
    }

    pub fn init_const(&mut self, name: &str, shape: &[usize], value: f64) {
        self.insert(name, Tensor::full(shape, value));
    }

    pub fn zero_grads(&mut self) {
        for t in self.tensors.values_mut() {
            t.grad = None;
        }
    }

    /// Adds `scale * grad` into each named tensor's `grad` buffer.
    pub fn accumulate_grads(&mut self, grads: &[(String, Vec<f64>)], scale: f64) {
        for (name, g) in grads {
            if let Some(t) = self.tensors.get_mut(name) {
                let n = t.numel();
                let slot = t.grad.get_or_insert_with(|| vec![0.0; n]);
                for (s, v) in slot.iter_mut().zip(g) {
                    *s += scale * v;
                }
            }
        }
    }
}

/// A graph plus lazily bound parameters from a [`ParamStore`].
///
/// Parameters whose name starts with one of the `trainable` prefixes enter
/// the graph with `requires_grad`; all others are constants, so frozen
/// weights cost no gradient work.
pub struct Session<'a> {
    pub graph: Graph,
    store: &'a ParamStore,
    bound: HashMap<String, Var>,
    trainable: Vec<String>,
}

impl<'a> Session<'a> {
    /// Inference session: nothing requires gradients.
    pub fn frozen(store: &'a ParamStore) -> Self {
        Self::new(store, &[])
    }

    pub fn new(store: &'a ParamStore, trainable: &[&str]) -> Self {
        Self {
            graph: Graph::new(),
            store,
            bound: HashMap::new(),
            trainable: trainable.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable.iter().any(|p| name.starts_with(p.as_str()))
    }

    pub fn param(&mut self, name: &str) -> OpResult {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let t = self
            .store
            .get(name)
            .ok_or_else(|| NumericError::MissingParam(name.to_string()))?;
        let mut t = t.clone();
        t.grad = None;
        t.requires_grad = self.is_trainable(name);
        let v = self.graph.input(t);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Backward from `loss`; returns gradients of bound trainable
    /// parameters sorted by name.
    pub fn backward(&self, loss: Var) -> Result<Vec<(String, Vec<f64>)>, NumericError> {
        let grads = self.graph.backward(loss)?;
        Ok(self.collect(&grads))
    }

    pub fn collect(&self, grads: &Gradients) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = self
            .bound
            .iter()
            .filter(|(name, _)| self.is_trainable(name))
            .filter_map(|(name, &v)| grads.get(v).map(|g| (name.clone(), g.to_vec())))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}
