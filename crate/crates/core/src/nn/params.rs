use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Scalar, Tensor};

/// Initialization scheme for one parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Uniform(f64),
}

impl Init {
    pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    }

    /// Glorot for a `k×C×F` conv kernel: fan-in `k·C`, fan-out `k·F`.
    pub fn conv(k: usize, c: usize, f: usize) -> Init {
        Init::Glorot {
            fan_in: k * c,
            fan_out: k * f,
        }
    }

    pub fn dense(n: usize, m: usize) -> Init {
        Init::Glorot { fan_in: n, fan_out: m }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> ParamSpec {
        ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    /// Frozen parameters are used in the forward pass but never receive
    /// gradient or optimizer updates.
    pub frozen: bool,
}

/// Named parameters, each with a gradient buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn from_tensors(tensors: Vec<(String, Tensor<T>)>) -> ParamSet<T> {
        ParamSet {
            params: tensors
                .into_iter()
                .map(|(name, value)| Param {
                    grad: Tensor::zeros(value.shape()),
                    name,
                    value,
                    frozen: false,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, i: usize) -> &Param<T> {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param<T> {
        &mut self.params[i]
    }

    pub fn value(&self, i: usize) -> &Tensor<T> {
        &self.params[i].value
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> bool {
        match self.index_of(name) {
            Some(i) => {
                self.params[i].frozen = frozen;
                true
            }
            None => false,
        }
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Adds `g` into the gradient buffer of parameter `i` unless frozen.
    pub fn accumulate(&mut self, i: usize, g: &[T]) {
        let p = &mut self.params[i];
        if p.frozen {
            return;
        }
        for (d, &v) in p.grad.data_mut().iter_mut().zip(g) {
            *d = *d + v;
        }
    }
}

/// Deterministic initialization: one ChaCha stream per call, consumed in
/// spec order.
pub fn init_params<T: Scalar>(specs: &[ParamSpec], seed: u64) -> ParamSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = specs
        .iter()
        .map(|s| {
            let data: Vec<T> = match s.init {
                Init::Zeros => vec![T::zero(); s.numel()],
                Init::Glorot { fan_in, fan_out } => {
                    let a = Init::glorot_bound(fan_in, fan_out);
                    (0..s.numel())
                        .map(|_| T::from_f64_lossy(rng.random_range(-a..a)))
                        .collect()
                }
                Init::Uniform(a) => (0..s.numel())
                    .map(|_| T::from_f64_lossy(rng.random_range(-a..a)))
                    .collect(),
            };
            (s.name.clone(), Tensor::new(&s.shape, data).expect("spec shape"))
        })
        .collect();
    ParamSet::from_tensors(tensors)
}
