use std::collections::BTreeMap;

use rand::Rng;

use super::head::{Head, HeadCache, DENSE_LAYERS, DENSE_UNITS};
use super::{parse_list, ModelError};
use crate::features::{AUX_DIM, CHARSET_SIZE, MAX_CHARS};
use crate::nn::ops::{self, Activation, Conv1dCache, Padding, PoolCache};
use crate::nn::{init_params, Init, NnError, ParamSet, ParamSpec, Scalar, Tensor};

/// Character embeddings start uniform in `±0.05`.
pub const CHAR_EMBED_INIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxMode {
    /// Plain character CNN: no auxiliary input anywhere.
    None,
    /// Synonym-expanded text and the aux vector after the last hidden layer.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CCnnConfig {
    pub kernel_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub char_dim: usize,
    pub charset_size: usize,
    pub seq_len: usize,
    pub dense_units: usize,
    pub dense_layers: usize,
    pub aux_mode: AuxMode,
    pub dropout: f64,
}

impl Default for CCnnConfig {
    fn default() -> Self {
        CCnnConfig {
            kernel_sizes: vec![3, 4, 5, 7],
            filters_per_size: 128,
            char_dim: 128,
            charset_size: CHARSET_SIZE,
            seq_len: MAX_CHARS,
            dense_units: DENSE_UNITS,
            dense_layers: DENSE_LAYERS,
            aux_mode: AuxMode::Full,
            dropout: 0.5,
        }
    }
}

impl CCnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.dense_units != DENSE_UNITS || self.dense_layers != DENSE_LAYERS {
            return bad(format!("dense block is fixed at {DENSE_LAYERS}×{DENSE_UNITS}"));
        }
        if self.seq_len != MAX_CHARS || self.charset_size != CHARSET_SIZE {
            return bad(format!("char input must be {MAX_CHARS} indices over {CHARSET_SIZE} symbols"));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.iter().any(|&k| k == 0 || k > self.seq_len) {
            return bad("kernel sizes must be in 1..=280".into());
        }
        if self.filters_per_size == 0 || self.char_dim == 0 {
            return bad("filters and char_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)".into());
        }
        Ok(())
    }

    pub fn to_meta(&self, out: &mut BTreeMap<String, String>) {
        let ks: Vec<String> = self.kernel_sizes.iter().map(usize::to_string).collect();
        out.insert("model.kernel_sizes".into(), ks.join(","));
        out.insert("model.filters".into(), self.filters_per_size.to_string());
        out.insert("model.char_dim".into(), self.char_dim.to_string());
        out.insert("model.dropout".into(), self.dropout.to_string());
        out.insert(
            "model.aux_mode".into(),
            match self.aux_mode {
                AuxMode::None => "none",
                AuxMode::Full => "full",
            }
            .into(),
        );
    }

    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<CCnnConfig, ModelError> {
        let get = |k: &str| {
            meta.get(k)
                .ok_or_else(|| ModelError::Config(format!("checkpoint metadata lacks {k}")))
        };
        let num = |k: &str| -> Result<usize, ModelError> {
            get(k)?.parse().map_err(|_| ModelError::Config(format!("bad {k}")))
        };
        let aux_mode = match get("model.aux_mode")?.as_str() {
            "none" => AuxMode::None,
            "full" => AuxMode::Full,
            other => return Err(ModelError::Config(format!("bad aux_mode {other:?}"))),
        };
        let cfg = CCnnConfig {
            kernel_sizes: parse_list(get("model.kernel_sizes")?)?,
            filters_per_size: num("model.filters")?,
            char_dim: num("model.char_dim")?,
            dropout: get("model.dropout")?
                .parse()
                .map_err(|_| ModelError::Config("bad model.dropout".into()))?,
            aux_mode,
            ..CCnnConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
struct BranchCache<T> {
    conv: Conv1dCache<T>,
    c: Tensor<T>,
    a: Tensor<T>,
    pool: PoolCache,
}

#[derive(Debug, Clone)]
pub struct CCnnCache<T> {
    chars: Vec<u32>,
    branches: Vec<BranchCache<T>>,
    head: HeadCache<T>,
}

/// Trainable char embedding → per kernel size conv(valid)→tanh→global max
/// pool → concatenation → SELU dense block.
#[derive(Debug, Clone, PartialEq)]
pub struct CCnn<T> {
    pub config: CCnnConfig,
    pub params: ParamSet<T>,
    head: Head,
}

impl<T: Scalar> CCnn<T> {
    pub fn specs(cfg: &CCnnConfig) -> (Vec<ParamSpec>, Head) {
        let f = cfg.filters_per_size;
        let e = cfg.char_dim;
        let mut specs = vec![ParamSpec::new("char_embedding", &[cfg.charset_size, e], Init::Uniform(CHAR_EMBED_INIT))];
        for &k in &cfg.kernel_sizes {
            specs.push(ParamSpec::new(format!("branch{k}.conv.kernel"), &[k, e, f], Init::conv(k, e, f)));
            specs.push(ParamSpec::new(format!("branch{k}.conv.bias"), &[f], Init::Zeros));
        }
        let head = Head {
            input_width: cfg.kernel_sizes.len() * f,
            activation: Activation::Selu,
            use_aux: cfg.aux_mode == AuxMode::Full,
            dropout: cfg.dropout,
            first_param: specs.len(),
        };
        specs.extend(head.specs(""));
        (specs, head)
    }

    pub fn new(cfg: CCnnConfig, seed: u64) -> Result<CCnn<T>, ModelError> {
        cfg.validate()?;
        let (specs, head) = CCnn::<T>::specs(&cfg);
        Ok(CCnn {
            params: init_params(&specs, seed),
            config: cfg,
            head,
        })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        chars: &[u32],
        aux: &Tensor<T>,
        rng: Option<&mut R>,
    ) -> Result<(Tensor<T>, CCnnCache<T>), NnError> {
        let len = self.config.seq_len;
        if chars.is_empty() || !chars.len().is_multiple_of(len) {
            return Err(NnError::Shape(format!("char input must be B×{len} indices, got {}", chars.len())));
        }
        let batch = chars.len() / len;
        if aux.shape() != [batch, AUX_DIM] {
            return Err(NnError::Shape(format!("aux must be [{batch}, {AUX_DIM}], got {:?}", aux.shape())));
        }
        let embedded = ops::embedding_lookup(self.params.value(0), chars, batch)?;
        let mut pooled = Vec::with_capacity(self.config.kernel_sizes.len());
        let mut branches = Vec::with_capacity(self.config.kernel_sizes.len());
        for b in 0..self.config.kernel_sizes.len() {
            let i = 1 + 2 * b;
            let (c, conv) = ops::conv1d(&embedded, self.params.value(i), self.params.value(i + 1), Padding::Valid)?;
            let a = ops::activation(&c, Activation::Tanh);
            let (g, pool) = ops::global_maxpool(&a)?;
            pooled.push(g);
            branches.push(BranchCache { conv, c, a, pool });
        }
        let h0 = ops::concat_rows(&pooled.iter().collect::<Vec<_>>())?;
        let (logits, head) = self.head.forward(&self.params, h0, aux, rng)?;
        Ok((
            logits,
            CCnnCache {
                chars: chars.to_vec(),
                branches,
                head,
            },
        ))
    }

    pub fn backward(&mut self, cache: &CCnnCache<T>, grad_logits: &Tensor<T>) {
        let g_h0 = self.head.backward(&mut self.params, &cache.head, grad_logits);
        let f = self.config.filters_per_size;
        let grads = ops::split_rows(&g_h0, &vec![f; cache.branches.len()]);
        let mut g_embedded: Option<Tensor<T>> = None;
        for (b, (bc, g)) in cache.branches.iter().zip(grads).enumerate() {
            let i = 1 + 2 * b;
            let g = ops::pool_backward(&bc.pool, &g);
            let g = ops::activation_backward(Activation::Tanh, &bc.c, &bc.a, &g);
            let kernel = self.params.value(i);
            let mut gk = vec![T::zero(); kernel.len()];
            let mut gb = vec![T::zero(); f];
            let dx = ops::conv1d_backward(&bc.conv, kernel, &g, &mut gk, &mut gb, true).expect("input gradient");
            self.params.accumulate(i, &gk);
            self.params.accumulate(i + 1, &gb);
            g_embedded = Some(match g_embedded {
                None => dx,
                Some(mut acc) => {
                    for (a, &d) in acc.data_mut().iter_mut().zip(dx.data()) {
                        *a = *a + d;
                    }
                    acc
                }
            });
        }
        if let Some(g) = g_embedded {
            let mut gt = vec![T::zero(); self.params.value(0).len()];
            ops::embedding_backward(&cache.chars, &g, &mut gt);
            self.params.accumulate(0, &gt);
        }
    }
}
