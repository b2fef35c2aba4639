//! Ordered, named collections of tensors (model parameters, gradients,
//! optimizer moments).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph, Var};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T> Default for ModelParams<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            index: self.index.clone(),
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Same names and shapes in the same order.
    pub fn same_layout<U: Real>(&self, other: &ModelParams<U>) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }

    /// `self += other`, elementwise. Layouts must match.
    pub fn add_assign(&mut self, other: &ModelParams<T>) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Register every tensor as a parameter node of `g`.
    pub fn register(&self, g: &mut Graph<T>) -> Result<ParamVars> {
        let vars = self
            .iter()
            .map(|(name, t)| g.param(name, t.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamVars {
            vars,
            index: self.index.clone(),
        })
    }

    /// Gradient for every parameter of `vars`, zero where unreachable.
    pub fn collect_grads(&self, grads: &Gradients<T>, vars: &ParamVars) -> ModelParams<T> {
        ModelParams {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .zip(&vars.vars)
                .map(|(t, &v)| grads.wrt_or_zero(v, t.shape()))
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Graph handles for a registered [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }
}
