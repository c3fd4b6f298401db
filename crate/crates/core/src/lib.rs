/*!
Drug-abuse tweet classification toolkit.

The crate covers the whole pipeline used to study classifiers on sparse,
class-imbalanced Twitter data:

- [`corpus`]: dataset/annotation files, label aggregation, deduplication,
  class-ratio scenarios and fold plans.
- [`features`]: tokenization, lexicon and word-cluster features, synonym
  expansion, the 154-dim auxiliary vector and character encoding.
- [`embeddings`]: pretrained word-vector tables and fixed-shape word matrices.
- [`nn`]: a small tensor engine (conv1d, pooling, dense, activations,
  softmax cross-entropy, Adam, checkpoints) with hand-written backward passes.
- [`models`]: the word-level and char-level CNN classifiers, training with
  per-epoch checkpoints and best-epoch selection.
- [`baselines`]: multinomial Naive Bayes, linear SVM with Platt scaling,
  random forest and the calibrated pre-filter.
- [`eval`]: metrics, majority voting, cross-validation, inter-annotator
  agreement.
- [`experiment`]: configuration, orchestration over scenarios and report
  emission.

Data-parallel loops (batch inference, ensemble members, folds, forest trees)
go through [`parallel::Executor`], which uses rayon when the `parallel`
feature is enabled and runs sequentially otherwise.
*/

pub mod baselines;
pub mod corpus;
pub mod embeddings;
pub mod ensemble;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod models;
pub mod nn;
pub mod parallel;
pub mod synth;

pub use corpus::{Dataset, Label, Tweet};
pub use parallel::Executor;
