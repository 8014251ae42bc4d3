use ndarray::Array2;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
}

/// Named parameter matrices in a fixed order.
///
/// The order is the serialization order of the checkpoint format and the
/// order in which optimizers walk the parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) {
        let name = name.into();
        debug_assert!(self.index_of(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param { name, value });
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Panics on unknown names; layouts are fixed by the model config.
    pub fn get(&self, name: &str) -> &Array2<f64> {
        match self.index_of(name) {
            Some(i) => &self.params[i].value,
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        match self.index_of(name) {
            Some(i) => &mut self.params[i].value,
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Total number of scalars.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: Array2::zeros(p.value.dim()),
                })
                .collect(),
        }
    }

    /// Whether `other` has the same names and shapes in the same order.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|(a, b)| a.name == b.name && a.value.dim() == b.value.dim())
    }

    /// `self += scale * other`, layouts must match.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        debug_assert!(self.same_layout(other));
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            p.value.scaled_add(scale, &q.value);
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            if p.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    location: format!("parameter {}", p.name),
                });
            }
        }
        Ok(())
    }

    /// Values concatenated in store order, row-major within each matrix.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }
}

/// Weight `fan_in × fan_out` drawn from `U(±1/√fan_in)`.
pub(crate) fn uniform_weight(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound))
}

pub(crate) fn zero_bias(width: usize) -> Array2<f64> {
    Array2::zeros((1, width))
}
