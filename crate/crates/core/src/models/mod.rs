//! The word-level (W-CNN) and char-level (C-CNN) classifiers, training with
//! one checkpoint per epoch, and best-epoch selection.

pub mod ccnn;
pub mod encode;
mod head;
pub mod train;
pub mod wcnn;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::corpus::Label;
use crate::nn::ops::{self, softmax};
use crate::nn::{ModelCheckpoint, NnError, ParamSet, Scalar, Tensor};
use crate::parallel::Executor;

pub use ccnn::{AuxMode, CCnn, CCnnConfig};
pub use encode::{Batch, EncodedSet, Encoder, InputPath};
pub use head::{CLASSES, DENSE_LAYERS, DENSE_UNITS};
pub use train::{select_best_epoch, train, train_with, SelectionMetric, TrainConfig};
pub use wcnn::{WCnn, WCnnConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("training set is empty")]
    EmptyTraining,
    #[error("training set contains a single class ({0})")]
    SingleClass(Label),
    #[error("training data is unlabeled")]
    Unlabeled,
    #[error("encoded set has no word vectors; the word model needs an embedding table")]
    MissingWords,
    #[error("non-finite training loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("no checkpoints to select from")]
    NoCheckpoints,
    #[error("checkpoint sink failed: {0}")]
    Sink(String),
}

pub(crate) fn parse_list(s: &str) -> Result<Vec<usize>, ModelError> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| ModelError::Config(format!("bad list {s:?}"))))
        .collect()
}

/// The three CNN member types of the deep ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CnnKind {
    CharAux,
    CharCnn,
    WordAux,
}

impl CnnKind {
    pub const ALL: [CnnKind; 3] = [CnnKind::CharAux, CnnKind::CharCnn, CnnKind::WordAux];

    pub fn name(self) -> &'static str {
        match self {
            CnnKind::CharAux => "char_aux",
            CnnKind::CharCnn => "char_cnn",
            CnnKind::WordAux => "word_aux",
        }
    }
}

impl fmt::Display for CnnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CnnKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CnnKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown CNN kind {s:?}"))
    }
}

/// Architecture settings for building any CNN member.
#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub struct CnnArch {
    pub word: WCnnConfig,
    pub char: CCnnConfig,
}


pub fn build_wcnn<T: Scalar>(cfg: &WCnnConfig, seed: u64) -> Result<Network<T>, ModelError> {
    Ok(Network::Word(WCnn::new(cfg.clone(), seed)?))
}

pub fn build_ccnn<T: Scalar>(cfg: &CCnnConfig, seed: u64) -> Result<Network<T>, ModelError> {
    Ok(Network::Char(CCnn::new(cfg.clone(), seed)?))
}

#[derive(Debug, Clone)]
pub enum NetCache<T> {
    Word(wcnn::WCnnCache<T>),
    Char(ccnn::CCnnCache<T>),
}

/// A CNN classifier of either architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum Network<T> {
    Word(WCnn<T>),
    Char(CCnn<T>),
}

/// Class decision plus positive-class probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub positive_prob: f64,
}

impl Prediction {
    /// Argmax over `[p_negative, p_positive]`; an exact tie goes to the
    /// lower class index (negative).
    pub fn from_probs(p_neg: f64, p_pos: f64) -> Prediction {
        Prediction {
            label: Label::from_bool(p_pos > p_neg),
            positive_prob: p_pos,
        }
    }
}

/// Rows per forward pass during inference. Fixed so that results never
/// depend on the thread count.
pub const INFERENCE_CHUNK: usize = 64;

impl<T: Scalar> Network<T> {
    pub fn build(kind: CnnKind, arch: &CnnArch, seed: u64) -> Result<Network<T>, ModelError> {
        match kind {
            CnnKind::WordAux => build_wcnn(&arch.word, seed),
            CnnKind::CharAux => build_ccnn(
                &CCnnConfig {
                    aux_mode: AuxMode::Full,
                    ..arch.char.clone()
                },
                seed,
            ),
            CnnKind::CharCnn => build_ccnn(
                &CCnnConfig {
                    aux_mode: AuxMode::None,
                    ..arch.char.clone()
                },
                seed,
            ),
        }
    }

    pub fn kind(&self) -> CnnKind {
        match self {
            Network::Word(_) => CnnKind::WordAux,
            Network::Char(c) if c.config.aux_mode == AuxMode::Full => CnnKind::CharAux,
            Network::Char(_) => CnnKind::CharCnn,
        }
    }

    pub fn input_path(&self) -> InputPath {
        match self.kind() {
            CnnKind::WordAux => InputPath::Words,
            CnnKind::CharAux => InputPath::CharsExpanded,
            CnnKind::CharCnn => InputPath::Chars,
        }
    }

    pub fn params(&self) -> &ParamSet<T> {
        match self {
            Network::Word(m) => &m.params,
            Network::Char(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        match self {
            Network::Word(m) => &mut m.params,
            Network::Char(m) => &mut m.params,
        }
    }

    /// Logits `[B, 2]`. Passing `rng` enables dropout.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &Batch<T>,
        rng: Option<&mut R>,
    ) -> Result<(Tensor<T>, NetCache<T>), NnError> {
        match self {
            Network::Word(m) => {
                let words = batch
                    .words
                    .as_ref()
                    .ok_or_else(|| NnError::Shape("word model needs a word batch".into()))?;
                let (z, c) = m.forward(words, &batch.aux, rng)?;
                Ok((z, NetCache::Word(c)))
            }
            Network::Char(m) => {
                let (z, c) = m.forward(&batch.chars, &batch.aux, rng)?;
                Ok((z, NetCache::Char(c)))
            }
        }
    }

    pub fn backward(&mut self, cache: &NetCache<T>, grad_logits: &Tensor<T>) -> Result<(), NnError> {
        match (self, cache) {
            (Network::Word(m), NetCache::Word(c)) => m.backward(c, grad_logits),
            (Network::Char(m), NetCache::Char(c)) => m.backward(c, grad_logits),
            _ => return Err(NnError::Shape("cache belongs to a different architecture".into())),
        }
        Ok(())
    }

    pub fn batch(&self, set: &EncodedSet, indices: &[usize]) -> Result<Batch<T>, ModelError> {
        if self.input_path() == InputPath::Words {
            if !set.has_words() {
                return Err(ModelError::MissingWords);
            }
            if let Network::Word(m) = self {
                if set.word_dim != m.config.embed_dim {
                    return Err(ModelError::Nn(NnError::Shape(format!(
                        "word vectors have dimension {}, model expects {}",
                        set.word_dim, m.config.embed_dim
                    ))));
                }
            }
        }
        Ok(Batch::assemble(set, indices, self.input_path()))
    }

    /// Softmax probabilities `[p_neg, p_pos]` per row of a batch (dropout off).
    pub fn probabilities(&self, batch: &Batch<T>) -> Result<Vec<[f64; 2]>, NnError> {
        let (logits, _) = self.forward(batch, None::<&mut rand_chacha::ChaCha8Rng>)?;
        let p = softmax(logits.data(), CLASSES);
        Ok(p.chunks(CLASSES)
            .map(|r| [r[0].to_f64_lossy(), r[1].to_f64_lossy()])
            .collect())
    }

    /// Predictions for every sample of `set`, in order.
    pub fn predict_set(&self, set: &EncodedSet, exec: Executor) -> Result<Vec<Prediction>, ModelError> {
        let chunks = set.len().div_ceil(INFERENCE_CHUNK);
        let parts = exec.try_map_range(chunks, |c| {
            let idx: Vec<usize> = (c * INFERENCE_CHUNK..((c + 1) * INFERENCE_CHUNK).min(set.len())).collect();
            let batch = self.batch(set, &idx)?;
            Ok::<_, ModelError>(
                self.probabilities(&batch)?
                    .into_iter()
                    .map(|[n, p]| Prediction::from_probs(n, p))
                    .collect::<Vec<_>>(),
            )
        })?;
        Ok(parts.into_iter().flatten().collect())
    }

    pub fn config_meta(&self) -> BTreeMap<String, String> {
        let mut meta = BTreeMap::new();
        meta.insert("kind".into(), self.kind().name().into());
        match self {
            Network::Word(m) => m.config.to_meta(&mut meta),
            Network::Char(m) => m.config.to_meta(&mut meta),
        }
        meta
    }

    pub fn to_checkpoint(&self, epoch: usize) -> ModelCheckpoint {
        let mut cp = ModelCheckpoint::with_params(epoch, self.params());
        cp.meta = self.config_meta();
        cp
    }

    /// Rebuilds the network described by a checkpoint's metadata and loads
    /// its parameters.
    pub fn from_checkpoint(cp: &ModelCheckpoint) -> Result<Network<T>, ModelError> {
        let kind: CnnKind = cp
            .meta
            .get("kind")
            .ok_or_else(|| ModelError::Config("checkpoint has no kind".into()))?
            .parse()
            .map_err(ModelError::Config)?;
        let mut net = match kind {
            CnnKind::WordAux => build_wcnn(&WCnnConfig::from_meta(&cp.meta)?, 0)?,
            CnnKind::CharAux | CnnKind::CharCnn => build_ccnn(&CCnnConfig::from_meta(&cp.meta)?, 0)?,
        };
        cp.restore_into(net.params_mut())?;
        Ok(net)
    }
}

/// Single-sample prediction.
pub fn predict<T: Scalar>(net: &Network<T>, set: &EncodedSet, index: usize) -> Result<Prediction, ModelError> {
    let batch = net.batch(set, &[index])?;
    let [n, p] = net.probabilities(&batch)?[0];
    Ok(Prediction::from_probs(n, p))
}

/// Records one forward pass so the matching backward pass can run.
pub struct Graph<'a, T> {
    net: &'a mut Network<T>,
    cache: Option<NetCache<T>>,
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new(net: &'a mut Network<T>) -> Graph<'a, T> {
        Graph { net, cache: None }
    }

    pub fn forward<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: Option<&mut R>) -> Result<Tensor<T>, NnError> {
        let (logits, cache) = self.net.forward(batch, rng)?;
        self.cache = Some(cache);
        Ok(logits)
    }

    /// Back-propagates `∂loss/∂logits` into the parameter gradient buffers.
    /// Consumes the recorded pass.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<(), NnError> {
        let cache = self.cache.take().ok_or(NnError::NoForward)?;
        self.net.backward(&cache, grad_logits)
    }

    /// Forward, mean cross-entropy against the batch gold labels, backward.
    pub fn loss_and_backward<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: Option<&mut R>) -> Result<T, NnError> {
        let logits = self.forward(batch, rng)?;
        let xent = ops::softmax_xent(&logits, &batch.gold)?;
        self.backward(&xent.grad)?;
        Ok(xent.loss)
    }
}
