use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::Scalar;
use crate::error::{Error, Result};

/// Handle to a trainable tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

/// Owns every trainable tensor of a model. Layers hold [`ParamId`]s, so two
/// layers that share an id share one storage and one gradient buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

pub enum Init {
    Zeros,
    Ones,
    /// Uniform Xavier/Glorot with the given fan-in and fan-out.
    Xavier { fan_in: usize, fan_out: usize },
    Normal { std: f64 },
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut impl Rng) -> ParamId {
        let len: usize = shape.iter().product();
        let value: Vec<T> = match init {
            Init::Zeros => vec![T::zero(); len],
            Init::Ones => vec![T::one(); len],
            Init::Xavier { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("valid bounds");
                (0..len).map(|_| T::of(dist.sample(rng))).collect()
            }
            Init::Normal { std } => {
                let dist = Normal::new(0.0, std).expect("valid std");
                (0..len).map(|_| T::of(dist.sample(rng))).collect()
            }
        };
        self.insert(name, shape.to_vec(), value)
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<T>) -> ParamId {
        let id = ParamId(self.params.len());
        let grad = vec![T::zero(); value.len()];
        self.params.push(Param {
            name: name.into(),
            shape,
            value,
            grad,
        });
        id
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g.as_f64() * g.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Overwrites a parameter's values, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Vec<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if value.len() != p.value.len() {
            return Err(Error::Shape {
                op: "set_value",
                left: p.shape.clone(),
                right: vec![value.len()],
            });
        }
        p.value = value;
        Ok(())
    }

    /// Converts every tensor to another precision.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    value: p.value.iter().map(|v| U::of(v.as_f64())).collect(),
                    grad: vec![U::zero(); p.value.len()],
                })
                .collect(),
        }
    }
}
