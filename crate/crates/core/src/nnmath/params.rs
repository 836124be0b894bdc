use indexmap::IndexMap;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// A learnable tensor with its gradient accumulator and Adam moment buffers.
#[derive(Clone, Debug)]
pub struct ParamTensor {
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
    pub adam_m: DenseMatrix,
    pub adam_v: DenseMatrix,
}

impl ParamTensor {
    pub fn new(value: DenseMatrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: DenseMatrix::zeros(r, c),
            adam_m: DenseMatrix::zeros(r, c),
            adam_v: DenseMatrix::zeros(r, c),
        }
    }
}

/// Named parameters in stable insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    tensors: IndexMap<String, ParamTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseMatrix) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name {name}"
            )));
        }
        self.tensors.insert(name, ParamTensor::new(value));
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.tensors.get_mut(name)
    }

    /// Value of a parameter that must exist.
    pub fn value(&self, name: &str) -> &DenseMatrix {
        &self
            .tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut DenseMatrix {
        &mut self
            .tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .value
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut DenseMatrix {
        &mut self
            .tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .grad
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamTensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|t| t.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for t in self.tensors.values_mut() {
            t.grad.fill(0.0);
        }
    }

    /// `Σ θ²` over every parameter.
    pub fn squared_norm(&self) -> f64 {
        self.tensors.values().map(|t| t.value.squared_norm()).sum()
    }

    /// Adds the gradient of `λ‖Φ‖²`, i.e. `2λθ`, to every accumulator.
    pub fn add_l2_grad(&mut self, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for t in self.tensors.values_mut() {
            for (g, v) in t.grad.as_mut_slice().iter_mut().zip(t.value.as_slice()) {
                *g += 2.0 * lambda * v;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.value.is_finite())
    }

    /// Copies values (not gradients or moments) from `other` for every
    /// parameter both stores share by name and shape.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, t) in self.tensors.iter_mut() {
            let src = other.get(name).ok_or_else(|| {
                Error::Checkpoint(format!("parameter {name} missing from source"))
            })?;
            if src.value.shape() != t.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: shape {:?} vs {:?}",
                    src.value.shape(),
                    t.value.shape()
                )));
            }
            t.value = src.value.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_stable_and_counts_add_up() {
        let mut s = ParamStore::new();
        s.insert("b", DenseMatrix::zeros(2, 3)).unwrap();
        s.insert("a", DenseMatrix::zeros(1, 4)).unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), vec!["b", "a"]);
        assert_eq!(s.parameter_count(), 10);
        assert!(s.insert("a", DenseMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn l2_gradient_is_two_lambda_theta() {
        let mut s = ParamStore::new();
        s.insert("w", DenseMatrix::from_rows(&[&[1.0, -2.0]])).unwrap();
        s.add_l2_grad(0.5);
        assert_eq!(s.get("w").unwrap().grad.as_slice(), &[1.0, -2.0]);
        assert_eq!(s.squared_norm(), 5.0);
    }
}
