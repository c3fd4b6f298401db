//! Classical comparison models over TF-IDF + aux features, and the
//! calibrated pre-filter used to pick tweets for annotation.

mod nb;
mod rf;
mod svm;
mod tfidf;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Dataset, Label};
use crate::features::{tokenize, FeatureTables};
use crate::models::Prediction;
use crate::nn::{ModelCheckpoint, NnError, StoredTensor};
use crate::parallel::Executor;

pub use nb::{train_nb, NbModel};
pub use rf::{gini, grow_tree, train_rf, tree_seed, Node, RfConfig, RfModel, Tree};
pub use svm::{platt_fit, platt_probability, train_svm, train_svm_with, SvmConfig, SvmModel};
pub use tfidf::{BowVector, TfidfVectorizer};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("training set is empty")]
    Empty,
    #[error("training set has a single class")]
    SingleClass,
    #[error("training data is unlabeled")]
    Unlabeled,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid baseline configuration: {0}")]
    Config(String),
    #[error("bad baseline checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Validates a training set and returns its feature dimension.
pub(crate) fn check_training(xs: &[BowVector], ys: &[Label]) -> Result<usize, BaselineError> {
    if xs.is_empty() {
        return Err(BaselineError::Empty);
    }
    if xs.len() != ys.len() {
        return Err(BaselineError::Shape(format!("{} vectors vs {} labels", xs.len(), ys.len())));
    }
    let dim = xs[0].dim();
    if xs.iter().any(|x| x.dim() != dim) {
        return Err(BaselineError::Shape("vectors of different dimension".into()));
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(BaselineError::SingleClass);
    }
    Ok(dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaselineKind {
    Svm,
    Rf,
    Nb,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Svm, BaselineKind::Rf, BaselineKind::Nb];

    /// Roster and report name.
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Svm => "svm",
            BaselineKind::Rf => "random_forest",
            BaselineKind::Nb => "naive_bayes",
        }
    }

    /// Checkpoint kind tag.
    pub fn tag(self) -> &'static str {
        match self {
            BaselineKind::Svm => "SVM1",
            BaselineKind::Rf => "RF1",
            BaselineKind::Nb => "NB1",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.tag() == s)
            .ok_or_else(|| format!("unknown baseline kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub svm: SvmConfig,
    pub rf: RfConfig,
    /// Train Naive Bayes on a bootstrap resample (distinguishes ensemble
    /// members, since NB is otherwise deterministic).
    pub nb_bootstrap: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            svm: SvmConfig::default(),
            rf: RfConfig::default(),
            nb_bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Nb(NbModel),
    Svm(SvmModel),
    Rf(RfModel),
}

/// A fitted vectorizer plus classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub vectorizer: TfidfVectorizer,
    pub classifier: Classifier,
}

/// Tokens and aux vectors of a dataset, vectorized.
pub fn featurize(v: &TfidfVectorizer, tables: &FeatureTables, texts: &[&str]) -> Vec<BowVector> {
    texts
        .iter()
        .map(|t| {
            let toks = tokenize(t);
            v.vectorize(&toks, &tables.aux(&toks))
        })
        .collect()
}

impl Baseline {
    pub fn kind(&self) -> BaselineKind {
        match self.classifier {
            Classifier::Nb(_) => BaselineKind::Nb,
            Classifier::Svm(_) => BaselineKind::Svm,
            Classifier::Rf(_) => BaselineKind::Rf,
        }
    }

    /// Fits the vectorizer on `train` and trains one model of `kind`.
    pub fn train(
        kind: BaselineKind,
        train: &Dataset,
        tables: &FeatureTables,
        cfg: &BaselineConfig,
        seed: u64,
        exec: Executor,
    ) -> Result<Baseline, BaselineError> {
        let ys = train.labels().map_err(|_| BaselineError::Unlabeled)?;
        let texts: Vec<&str> = train.texts().collect();
        let toks: Vec<_> = texts.iter().map(|t| tokenize(t)).collect();
        let vectorizer = TfidfVectorizer::fit(&toks);
        let xs: Vec<BowVector> = toks.iter().map(|t| vectorizer.vectorize(t, &tables.aux(t))).collect();
        let classifier = match kind {
            BaselineKind::Nb if cfg.nb_bootstrap => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (bx, by) = bootstrap_with_both_classes(&xs, &ys, &mut rng);
                Classifier::Nb(train_nb(&bx, &by)?)
            }
            BaselineKind::Nb => Classifier::Nb(train_nb(&xs, &ys)?),
            BaselineKind::Svm => Classifier::Svm(train_svm(&xs, &ys, &SvmConfig { seed, ..cfg.svm.clone() })?),
            BaselineKind::Rf => Classifier::Rf(train_rf(&xs, &ys, &RfConfig { seed, ..cfg.rf.clone() }, exec)?),
        };
        Ok(Baseline { vectorizer, classifier })
    }

    pub fn predict_vector(&self, x: &BowVector) -> Prediction {
        let (label, p) = match &self.classifier {
            Classifier::Nb(m) => m.predict(x),
            Classifier::Svm(m) => m.predict(x),
            Classifier::Rf(m) => m.predict(x),
        };
        Prediction { label, positive_prob: p }
    }

    pub fn predict_texts(&self, texts: &[&str], tables: &FeatureTables, exec: Executor) -> Vec<Prediction> {
        exec.map_slice(texts, |t| {
            let toks = tokenize(t);
            self.predict_vector(&self.vectorizer.vectorize(&toks, &tables.aux(&toks)))
        })
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        let mut cp = ModelCheckpoint::new(0);
        cp.meta.insert("kind".into(), self.kind().tag().into());
        cp.meta.insert("tfidf.vocab".into(), self.vectorizer.vocab().join(" "));
        let idf = self.vectorizer.idf_weights();
        cp.tensors.push(StoredTensor::from_f64_bits("tfidf.idf", &[idf.len()], idf));
        match &self.classifier {
            Classifier::Nb(m) => {
                cp.tensors.push(StoredTensor::from_f64_bits("nb.log_prior", &[2], &m.log_prior));
                let flat: Vec<f64> = m.log_lik.iter().flatten().copied().collect();
                cp.tensors.push(StoredTensor::from_f64_bits("nb.log_lik", &[2, m.dim()], &flat));
            }
            Classifier::Svm(m) => {
                cp.tensors.push(StoredTensor::from_f64_bits("svm.weights", &[m.weights.len()], &m.weights));
                let scalars = [m.bias_weight, m.bias_feature, m.platt_a, m.platt_b];
                cp.tensors.push(StoredTensor::from_f64_bits("svm.scalars", &[4], &scalars));
            }
            Classifier::Rf(m) => {
                cp.meta.insert("rf.dim".into(), m.dim.to_string());
                for (i, t) in m.trees.iter().enumerate() {
                    // per node: kind, feature|neg, threshold|pos, left, right
                    let mut data = Vec::with_capacity(t.nodes.len() * 5);
                    for n in &t.nodes {
                        match *n {
                            Node::Leaf { counts } => data.extend([
                                0.0,
                                f32::from_bits(counts[0]),
                                f32::from_bits(counts[1]),
                                0.0,
                                0.0,
                            ]),
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => data.extend([
                                1.0,
                                f32::from_bits(feature),
                                threshold,
                                f32::from_bits(left),
                                f32::from_bits(right),
                            ]),
                        }
                    }
                    cp.tensors.push(StoredTensor::new(format!("rf.tree{i}"), &[t.nodes.len(), 5], data));
                }
            }
        }
        cp
    }

    pub fn from_checkpoint(cp: &ModelCheckpoint) -> Result<Baseline, BaselineError> {
        let bad = |m: &str| BaselineError::Checkpoint(m.to_string());
        let kind: BaselineKind = cp
            .meta
            .get("kind")
            .ok_or_else(|| bad("no kind"))?
            .parse()
            .map_err(|e: String| BaselineError::Checkpoint(e))?;
        let f64s = |name: &str| -> Result<Vec<f64>, BaselineError> {
            cp.tensor(name)
                .and_then(StoredTensor::to_f64_bits)
                .ok_or_else(|| BaselineError::Checkpoint(format!("missing tensor {name}")))
        };
        let vocab_text = cp.meta.get("tfidf.vocab").ok_or_else(|| bad("no vocabulary"))?;
        let vocab: Vec<String> = vocab_text.split(' ').filter(|s| !s.is_empty()).map(String::from).collect();
        let idf = f64s("tfidf.idf")?;
        if idf.len() != vocab.len() {
            return Err(bad("vocabulary and idf lengths differ"));
        }
        let vectorizer = TfidfVectorizer::from_parts(vocab, idf);
        let classifier = match kind {
            BaselineKind::Nb => {
                let prior = f64s("nb.log_prior")?;
                let lik = f64s("nb.log_lik")?;
                if prior.len() != 2 || lik.len() % 2 != 0 {
                    return Err(bad("malformed NB tensors"));
                }
                let d = lik.len() / 2;
                Classifier::Nb(NbModel {
                    log_prior: [prior[0], prior[1]],
                    log_lik: [lik[..d].to_vec(), lik[d..].to_vec()],
                })
            }
            BaselineKind::Svm => {
                let s = f64s("svm.scalars")?;
                if s.len() != 4 {
                    return Err(bad("malformed SVM scalars"));
                }
                Classifier::Svm(SvmModel {
                    weights: f64s("svm.weights")?,
                    bias_weight: s[0],
                    bias_feature: s[1],
                    platt_a: s[2],
                    platt_b: s[3],
                })
            }
            BaselineKind::Rf => {
                let dim = cp
                    .meta
                    .get("rf.dim")
                    .and_then(|d| d.parse().ok())
                    .ok_or_else(|| bad("no forest dimension"))?;
                let mut trees = Vec::new();
                for t in cp.tensors.iter().filter(|t| t.name.starts_with("rf.tree")) {
                    if t.shape.len() != 2 || t.shape[1] != 5 {
                        return Err(bad("malformed tree tensor"));
                    }
                    let n = t.shape[0];
                    let mut nodes = Vec::with_capacity(n);
                    for r in t.data.chunks_exact(5) {
                        nodes.push(if r[0] == 0.0 {
                            Node::Leaf {
                                counts: [r[1].to_bits(), r[2].to_bits()],
                            }
                        } else {
                            let (left, right) = (r[3].to_bits(), r[4].to_bits());
                            if left as usize >= n || right as usize >= n {
                                return Err(bad("tree child out of range"));
                            }
                            Node::Split {
                                feature: r[1].to_bits(),
                                threshold: r[2],
                                left,
                                right,
                            }
                        });
                    }
                    trees.push(Tree { nodes });
                }
                if trees.is_empty() {
                    return Err(bad("forest has no trees"));
                }
                Classifier::Rf(RfModel { trees, dim })
            }
        };
        Ok(Baseline { vectorizer, classifier })
    }
}

/// Bootstrap resample; redrawn (up to a bound) until both classes appear.
fn bootstrap_with_both_classes(xs: &[BowVector], ys: &[Label], rng: &mut ChaCha8Rng) -> (Vec<BowVector>, Vec<Label>) {
    use rand::Rng;
    for _ in 0..100 {
        let idx: Vec<usize> = (0..xs.len()).map(|_| rng.random_range(0..xs.len())).collect();
        if idx.iter().any(|&i| ys[i].is_positive()) && idx.iter().any(|&i| !ys[i].is_positive()) {
            return (idx.iter().map(|&i| xs[i].clone()).collect(), idx.iter().map(|&i| ys[i]).collect());
        }
    }
    (xs.to_vec(), ys.to_vec())
}

/// Result of [`prefilter`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrefilterResult {
    pub selected: Dataset,
    /// Items whose calibrated probability passed the threshold.
    pub qualifying: usize,
    /// Fewer items qualified than requested; all of them were returned.
    pub short: bool,
}

/// Keeps items whose calibrated probability for their predicted class
/// exceeds `threshold`, then samples `sample_n` of them uniformly (seeded).
/// The selection keeps input order.
pub fn prefilter(
    unlabeled: &Dataset,
    model: &Baseline,
    tables: &FeatureTables,
    threshold: f64,
    sample_n: usize,
    seed: u64,
    exec: Executor,
) -> Result<PrefilterResult, BaselineError> {
    let Classifier::Svm(_) = model.classifier else {
        return Err(BaselineError::Config("the pre-filter needs a calibrated SVM".into()));
    };
    let texts: Vec<&str> = unlabeled.texts().collect();
    let preds = model.predict_texts(&texts, tables, exec);
    let qualifying: Vec<usize> = preds
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let conf = if p.label.is_positive() { p.positive_prob } else { 1.0 - p.positive_prob };
            conf > threshold
        })
        .map(|(i, _)| i)
        .collect();
    let short = qualifying.len() < sample_n;
    let mut chosen: Vec<usize> = if short {
        qualifying.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, qualifying.len(), sample_n).into_iter().map(|k| qualifying[k]).collect()
    };
    chosen.sort_unstable();
    Ok(PrefilterResult {
        selected: unlabeled.subset(&chosen),
        qualifying: qualifying.len(),
        short,
    })
}
