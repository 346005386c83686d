use std::collections::HashMap;

use rand::Rng;

use super::tensor::Tensor;
use crate::{Error, Real, Result};

/// Handle to a parameter registered in a [`ParameterStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    /// Accumulated gradient; same shape as `value`.
    pub grad: Tensor,
    pub trainable: bool,
}

/// Named trainable tensors. Registration order is stable and defines iteration
/// order everywhere (optimizer, checkpoints, gradient checks).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        let id = ParamId(self.params.len());
        let (r, c) = value.shape();
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad: Tensor::zeros(r, c),
            trainable: true,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Parameter)> {
        self.params
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p))
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// A fresh zeroed gradient buffer shaped like this store.
    pub fn gradient_buffer(&self) -> Gradients {
        Gradients {
            tensors: self
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        }
    }

    /// Adds a worker's gradient buffer into the accumulators.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        if grads.tensors.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} tensors, store has {}",
                grads.tensors.len(),
                self.params.len()
            )));
        }
        for (p, g) in self.params.iter_mut().zip(&grads.tensors) {
            p.grad.add_assign(g)?;
        }
        Ok(())
    }
}

/// Private gradient buffer matching the layout of a [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    /// Ordered element-wise sum of several buffers.
    pub fn merge(&mut self, other: &Gradients) -> Result<()> {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b)?;
        }
        Ok(())
    }
}

/// Uniform initialization in `[-scale, scale]`.
pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, scale: Real, rng: &mut R) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-scale..=scale))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}
