use std::collections::BTreeMap;

use rand::Rng;

use super::head::{Head, HeadCache, DENSE_LAYERS, DENSE_UNITS};
use super::{parse_list, ModelError};
use crate::embeddings::MAX_WORDS;
use crate::features::AUX_DIM;
use crate::nn::ops::{self, Activation, Conv1dCache, Padding, PoolCache};
use crate::nn::{init_params, Init, NnError, ParamSet, ParamSpec, Scalar, Tensor};

/// Word-level CNN configuration. The dense block (2 × 1,024 units), the
/// 154-dim aux vector and the 40-token input length are fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct WCnnConfig {
    pub kernel_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub pool_size: usize,
    pub dense_units: usize,
    pub dense_layers: usize,
    pub aux_dim: usize,
    pub seq_len: usize,
    pub embed_dim: usize,
    pub dropout: f64,
}

impl Default for WCnnConfig {
    fn default() -> Self {
        WCnnConfig {
            kernel_sizes: vec![3, 4, 5],
            filters_per_size: 128,
            pool_size: 2,
            dense_units: DENSE_UNITS,
            dense_layers: DENSE_LAYERS,
            aux_dim: AUX_DIM,
            seq_len: MAX_WORDS,
            embed_dim: 400,
            dropout: 0.5,
        }
    }
}

impl WCnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.dense_units != DENSE_UNITS || self.dense_layers != DENSE_LAYERS {
            return bad(format!("dense block is fixed at {DENSE_LAYERS}×{DENSE_UNITS}"));
        }
        if self.aux_dim != AUX_DIM {
            return bad(format!("aux_dim must be {AUX_DIM}"));
        }
        if self.seq_len != MAX_WORDS {
            return bad(format!("word sequence length must be {MAX_WORDS}"));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return bad("kernel sizes must be non-empty and positive".into());
        }
        if self.filters_per_size == 0 || self.embed_dim == 0 {
            return bad("filters and embedding dimension must be positive".into());
        }
        if self.pool_size == 0 || self.pooled_len().is_none() {
            return bad(format!("pool size {} does not fit two pooling stages", self.pool_size));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)".into());
        }
        Ok(())
    }

    /// Sequence length after each of the two pooling stages.
    fn pooled_len(&self) -> Option<(usize, usize)> {
        let p = self.pool_size;
        let l1 = self.seq_len.checked_sub(p)? / p + 1;
        let l2 = l1.checked_sub(p)? / p + 1;
        Some((l1, l2))
    }

    pub fn to_meta(&self, out: &mut BTreeMap<String, String>) {
        let ks: Vec<String> = self.kernel_sizes.iter().map(usize::to_string).collect();
        out.insert("model.kernel_sizes".into(), ks.join(","));
        out.insert("model.filters".into(), self.filters_per_size.to_string());
        out.insert("model.pool_size".into(), self.pool_size.to_string());
        out.insert("model.embed_dim".into(), self.embed_dim.to_string());
        out.insert("model.dropout".into(), self.dropout.to_string());
    }

    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<WCnnConfig, ModelError> {
        let get = |k: &str| {
            meta.get(k)
                .ok_or_else(|| ModelError::Config(format!("checkpoint metadata lacks {k}")))
        };
        let num = |k: &str| -> Result<usize, ModelError> {
            get(k)?.parse().map_err(|_| ModelError::Config(format!("bad {k}")))
        };
        let cfg = WCnnConfig {
            kernel_sizes: parse_list(get("model.kernel_sizes")?)?,
            filters_per_size: num("model.filters")?,
            pool_size: num("model.pool_size")?,
            embed_dim: num("model.embed_dim")?,
            dropout: get("model.dropout")?
                .parse()
                .map_err(|_| ModelError::Config("bad model.dropout".into()))?,
            ..WCnnConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
struct BranchCache<T> {
    conv1: Conv1dCache<T>,
    c1: Tensor<T>,
    a1: Tensor<T>,
    pool1: PoolCache,
    conv2: Conv1dCache<T>,
    c2: Tensor<T>,
    a2: Tensor<T>,
    pool2: PoolCache,
    pooled_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct WCnnCache<T> {
    branches: Vec<BranchCache<T>>,
    head: HeadCache<T>,
}

/// Per kernel size: conv→ReLU→maxpool→conv→ReLU→maxpool (same padding);
/// branches flattened and concatenated into the dense block.
#[derive(Debug, Clone, PartialEq)]
pub struct WCnn<T> {
    pub config: WCnnConfig,
    pub params: ParamSet<T>,
    head: Head,
}

impl<T: Scalar> WCnn<T> {
    pub fn specs(cfg: &WCnnConfig) -> (Vec<ParamSpec>, Head) {
        let f = cfg.filters_per_size;
        let d = cfg.embed_dim;
        let mut specs = Vec::new();
        for &k in &cfg.kernel_sizes {
            specs.push(ParamSpec::new(format!("branch{k}.conv1.kernel"), &[k, d, f], Init::conv(k, d, f)));
            specs.push(ParamSpec::new(format!("branch{k}.conv1.bias"), &[f], Init::Zeros));
            specs.push(ParamSpec::new(format!("branch{k}.conv2.kernel"), &[k, f, f], Init::conv(k, f, f)));
            specs.push(ParamSpec::new(format!("branch{k}.conv2.bias"), &[f], Init::Zeros));
        }
        let (_, l2) = cfg.pooled_len().expect("validated config");
        let head = Head {
            input_width: cfg.kernel_sizes.len() * l2 * f,
            activation: Activation::Relu,
            use_aux: true,
            dropout: cfg.dropout,
            first_param: specs.len(),
        };
        specs.extend(head.specs(""));
        (specs, head)
    }

    pub fn new(cfg: WCnnConfig, seed: u64) -> Result<WCnn<T>, ModelError> {
        cfg.validate()?;
        let (specs, head) = WCnn::<T>::specs(&cfg);
        Ok(WCnn {
            params: init_params(&specs, seed),
            config: cfg,
            head,
        })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        words: &Tensor<T>,
        aux: &Tensor<T>,
        rng: Option<&mut R>,
    ) -> Result<(Tensor<T>, WCnnCache<T>), NnError> {
        let &[batch, len, dim] = words.shape() else {
            return Err(NnError::Shape(format!("word input must be [B, 40, D], got {:?}", words.shape())));
        };
        if len != self.config.seq_len || dim != self.config.embed_dim {
            return Err(NnError::Shape(format!(
                "word input [{batch}, {len}, {dim}] does not match model [_, {}, {}]",
                self.config.seq_len, self.config.embed_dim
            )));
        }
        if aux.shape() != [batch, AUX_DIM] {
            return Err(NnError::Shape(format!("aux must be [{batch}, {AUX_DIM}], got {:?}", aux.shape())));
        }
        let p = self.config.pool_size;
        let mut flats = Vec::with_capacity(self.config.kernel_sizes.len());
        let mut branches = Vec::with_capacity(self.config.kernel_sizes.len());
        for b in 0..self.config.kernel_sizes.len() {
            let i = 4 * b;
            let v = |j| self.params.value(i + j);
            let (c1, conv1) = ops::conv1d(words, v(0), v(1), Padding::Same)?;
            let a1 = ops::activation(&c1, Activation::Relu);
            let (p1, pool1) = ops::maxpool1d(&a1, p, p)?;
            let (c2, conv2) = ops::conv1d(&p1, v(2), v(3), Padding::Same)?;
            let a2 = ops::activation(&c2, Activation::Relu);
            let (p2, pool2) = ops::maxpool1d(&a2, p, p)?;
            let pooled_shape = p2.shape().to_vec();
            let width = pooled_shape[1] * pooled_shape[2];
            flats.push(p2.reshape(&[batch, width])?);
            branches.push(BranchCache {
                conv1,
                c1,
                a1,
                pool1,
                conv2,
                c2,
                a2,
                pool2,
                pooled_shape,
            });
        }
        let h0 = ops::concat_rows(&flats.iter().collect::<Vec<_>>())?;
        let (logits, head) = self.head.forward(&self.params, h0, aux, rng)?;
        Ok((logits, WCnnCache { branches, head }))
    }

    pub fn backward(&mut self, cache: &WCnnCache<T>, grad_logits: &Tensor<T>) {
        let g_h0 = self.head.backward(&mut self.params, &cache.head, grad_logits);
        let widths: Vec<usize> = cache
            .branches
            .iter()
            .map(|b| b.pooled_shape[1] * b.pooled_shape[2])
            .collect();
        let grads = ops::split_rows(&g_h0, &widths);
        for (b, (bc, g)) in cache.branches.iter().zip(grads).enumerate() {
            let i = 4 * b;
            let g = g.reshape(&bc.pooled_shape).expect("branch shape");
            let g = ops::pool_backward(&bc.pool2, &g);
            let g = ops::activation_backward(Activation::Relu, &bc.c2, &bc.a2, &g);
            let g = self.conv_back(i + 2, &bc.conv2, &g, true).expect("input gradient");
            let g = ops::pool_backward(&bc.pool1, &g);
            let g = ops::activation_backward(Activation::Relu, &bc.c1, &bc.a1, &g);
            // word vectors are fixed inputs: no gradient past the first conv
            self.conv_back(i, &bc.conv1, &g, false);
        }
    }

    fn conv_back(
        &mut self,
        ki: usize,
        cache: &Conv1dCache<T>,
        g: &Tensor<T>,
        want_input: bool,
    ) -> Option<Tensor<T>> {
        let kernel = self.params.value(ki);
        let mut gk = vec![T::zero(); kernel.len()];
        let mut gb = vec![T::zero(); self.params.value(ki + 1).len()];
        let dx = ops::conv1d_backward(cache, kernel, g, &mut gk, &mut gb, want_input);
        self.params.accumulate(ki, &gk);
        self.params.accumulate(ki + 1, &gb);
        dx
    }
}
