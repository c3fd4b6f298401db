//! Dense block shared by both CNNs: two 1,024-unit hidden layers, optional
//! auxiliary-vector concatenation after the last hidden layer, and a
//! two-unit output layer.

use rand::Rng;

use crate::features::AUX_DIM;
use crate::nn::ops::{self, Activation};
use crate::nn::{Init, NnError, ParamSet, ParamSpec, Scalar, Tensor};

pub const DENSE_UNITS: usize = 1024;
pub const DENSE_LAYERS: usize = 2;
pub const CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub input_width: usize,
    pub activation: Activation,
    pub use_aux: bool,
    pub dropout: f64,
    /// Index of the first head parameter in the model's ParamSet; layout is
    /// `d1.w, d1.b, d2.w, d2.b, out.w, out.b`.
    pub first_param: usize,
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    h0: Tensor<T>,
    z1: Tensor<T>,
    h1: Tensor<T>,
    mask1: Option<Vec<T>>,
    d1: Tensor<T>,
    z2: Tensor<T>,
    h2: Tensor<T>,
    mask2: Option<Vec<T>>,
    h3: Tensor<T>,
}

impl Head {
    pub fn output_inputs(&self) -> usize {
        DENSE_UNITS + if self.use_aux { AUX_DIM } else { 0 }
    }

    pub fn specs(&self, prefix: &str) -> Vec<ParamSpec> {
        let out_in = self.output_inputs();
        vec![
            ParamSpec::new(format!("{prefix}dense1.w"), &[self.input_width, DENSE_UNITS], Init::dense(self.input_width, DENSE_UNITS)),
            ParamSpec::new(format!("{prefix}dense1.b"), &[DENSE_UNITS], Init::Zeros),
            ParamSpec::new(format!("{prefix}dense2.w"), &[DENSE_UNITS, DENSE_UNITS], Init::dense(DENSE_UNITS, DENSE_UNITS)),
            ParamSpec::new(format!("{prefix}dense2.b"), &[DENSE_UNITS], Init::Zeros),
            ParamSpec::new(format!("{prefix}out.w"), &[out_in, CLASSES], Init::dense(out_in, CLASSES)),
            ParamSpec::new(format!("{prefix}out.b"), &[CLASSES], Init::Zeros),
        ]
    }

    fn hidden<T: Scalar, R: Rng + ?Sized>(
        &self,
        x: &Tensor<T>,
        w: &Tensor<T>,
        b: &Tensor<T>,
        rng: Option<&mut R>,
    ) -> Result<(Tensor<T>, Tensor<T>, Option<Vec<T>>, Tensor<T>), NnError> {
        let z = ops::dense(x, w, b)?;
        let h = ops::activation(&z, self.activation);
        let (d, mask) = match rng {
            Some(rng) if self.dropout > 0.0 => {
                let (d, m) = ops::dropout(&h, self.dropout, rng);
                (d, Some(m))
            }
            _ => (h.clone(), None),
        };
        Ok((z, h, mask, d))
    }

    /// `rng` enables dropout (training mode).
    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        params: &ParamSet<T>,
        h0: Tensor<T>,
        aux: &Tensor<T>,
        mut rng: Option<&mut R>,
    ) -> Result<(Tensor<T>, HeadCache<T>), NnError> {
        let p = self.first_param;
        let (z1, h1, mask1, d1) = self.hidden(&h0, params.value(p), params.value(p + 1), rng.as_deref_mut())?;
        let (z2, h2, mask2, d2) = self.hidden(&d1, params.value(p + 2), params.value(p + 3), rng)?;
        let h3 = if self.use_aux {
            ops::concat_rows(&[&d2, aux])?
        } else {
            d2
        };
        let logits = ops::dense(&h3, params.value(p + 4), params.value(p + 5))?;
        Ok((
            logits,
            HeadCache {
                h0,
                z1,
                h1,
                mask1,
                d1,
                z2,
                h2,
                mask2,
                h3,
            },
        ))
    }

    fn dense_back<T: Scalar>(
        params: &mut ParamSet<T>,
        wi: usize,
        x: &Tensor<T>,
        g: &Tensor<T>,
    ) -> Tensor<T> {
        let w = params.value(wi);
        let mut gw = vec![T::zero(); w.len()];
        let mut gb = vec![T::zero(); params.value(wi + 1).len()];
        let dx = ops::dense_backward(x, w, g, &mut gw, &mut gb, true).expect("input gradient");
        params.accumulate(wi, &gw);
        params.accumulate(wi + 1, &gb);
        dx
    }

    /// Accumulates head gradients and returns `∂loss/∂h0`.
    pub fn backward<T: Scalar>(
        &self,
        params: &mut ParamSet<T>,
        cache: &HeadCache<T>,
        grad_logits: &Tensor<T>,
    ) -> Tensor<T> {
        let p = self.first_param;
        let mut g = Head::dense_back(params, p + 4, &cache.h3, grad_logits);
        if self.use_aux {
            g = ops::split_rows(&g, &[DENSE_UNITS, AUX_DIM]).swap_remove(0);
        }
        if let Some(m) = &cache.mask2 {
            g = ops::mul_elementwise(&g, m);
        }
        g = ops::activation_backward(self.activation, &cache.z2, &cache.h2, &g);
        g = Head::dense_back(params, p + 2, &cache.d1, &g);
        if let Some(m) = &cache.mask1 {
            g = ops::mul_elementwise(&g, m);
        }
        g = ops::activation_backward(self.activation, &cache.z1, &cache.h1, &g);
        Head::dense_back(params, p, &cache.h0, &g)
    }
}
