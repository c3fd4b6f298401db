//! Turns datasets into the model-ready inputs shared by every CNN member:
//! word-row ids into a per-set vector matrix, character indices (with and
//! without synonym expansion) and the auxiliary vector.

use std::collections::HashMap;

use crate::corpus::{Dataset, Label};
use crate::embeddings::{EmbeddingTable, MAX_WORDS};
use crate::features::{encode_chars, tokenize, FeatureTables, TokenSeq, AUX_DIM, MAX_CHARS};
use crate::nn::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    /// Rows of [`EncodedSet::word_vectors`], at most 40.
    pub word_rows: Vec<u32>,
    pub chars: Vec<u8>,
    pub chars_expanded: Vec<u8>,
    pub aux: Vec<f32>,
    /// Original plus synonym tokens (the word model's input sequence).
    pub tokens: TokenSeq,
}

/// Encoded dataset. `labels` is empty for unlabeled input.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub word_dim: usize,
    pub word_vectors: Vec<f32>,
    pub samples: Vec<EncodedSample>,
    pub labels: Vec<Label>,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.len() == self.samples.len()
    }

    pub fn has_words(&self) -> bool {
        self.word_dim > 0
    }

    /// Subset in the order of `indices`; the word matrix is shared.
    pub fn select(&self, indices: &[usize]) -> EncodedSet {
        EncodedSet {
            word_dim: self.word_dim,
            word_vectors: self.word_vectors.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: if self.is_labeled() {
                indices.iter().map(|&i| self.labels[i]).collect()
            } else {
                Vec::new()
            },
        }
    }

    /// The 40×dim word matrix of sample `i`.
    pub fn word_matrix(&self, i: usize) -> Vec<f32> {
        let d = self.word_dim;
        let mut out = vec![0.0; MAX_WORDS * d];
        for (r, &row) in self.samples[i].word_rows.iter().enumerate() {
            let row = row as usize;
            out[r * d..(r + 1) * d].copy_from_slice(&self.word_vectors[row * d..(row + 1) * d]);
        }
        out
    }
}

/// Feature tables plus the optional word-embedding table.
#[derive(Debug, Clone, Copy)]
pub struct Encoder<'a> {
    pub tables: &'a FeatureTables,
    pub embeddings: Option<&'a EmbeddingTable>,
}

impl<'a> Encoder<'a> {
    pub fn new(tables: &'a FeatureTables, embeddings: Option<&'a EmbeddingTable>) -> Encoder<'a> {
        Encoder { tables, embeddings }
    }

    pub fn encode_texts<'t>(&self, texts: impl IntoIterator<Item = &'t str>) -> EncodedSet {
        let word_dim = self.embeddings.map_or(0, EmbeddingTable::dim);
        let mut row_of: HashMap<String, u32> = HashMap::new();
        let mut word_vectors = Vec::new();
        let mut samples = Vec::new();
        for text in texts {
            let tokens = tokenize(text);
            let aux = self.tables.aux(&tokens).as_slice().iter().map(|&x| x as f32).collect();
            let expanded = self.tables.expand(&tokens);
            let word_rows = match self.embeddings {
                None => Vec::new(),
                Some(table) => expanded
                    .iter()
                    .take(MAX_WORDS)
                    .map(|tok| {
                        *row_of.entry(tok.to_string()).or_insert_with(|| {
                            let v = table.vector_or_oov(tok);
                            word_vectors.extend_from_slice(&v);
                            (word_vectors.len() / word_dim - 1) as u32
                        })
                    })
                    .collect(),
            };
            let chars = to_u8(encode_chars(text).as_slice());
            let chars_expanded = if expanded.len() > tokens.len() {
                let extra = expanded.tokens()[tokens.len()..].join(" ");
                to_u8(encode_chars(&format!("{text} {extra}")).as_slice())
            } else {
                chars.clone()
            };
            samples.push(EncodedSample {
                word_rows,
                chars,
                chars_expanded,
                aux,
                tokens: expanded,
            });
        }
        EncodedSet {
            word_dim,
            word_vectors,
            samples,
            labels: Vec::new(),
        }
    }

    /// Encodes a dataset; labels are kept when every item is labeled.
    pub fn encode(&self, d: &Dataset) -> EncodedSet {
        let mut set = self.encode_texts(d.texts());
        if let Ok(labels) = d.labels() {
            set.labels = labels;
        }
        set
    }
}

fn to_u8(v: &[u32]) -> Vec<u8> {
    v.iter().map(|&i| i as u8).collect()
}

/// Model inputs for a batch of samples.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub size: usize,
    /// `[B, 40, D]` when the word path is used.
    pub words: Option<Tensor<T>>,
    /// `B · 280` character indices when the char path is used.
    pub chars: Vec<u32>,
    /// `[B, 154]`.
    pub aux: Tensor<T>,
    /// Gold class indices (empty when unlabeled).
    pub gold: Vec<usize>,
}

/// Which inputs a batch needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputPath {
    Words,
    Chars,
    CharsExpanded,
}

impl<T: Scalar> Batch<T> {
    pub fn assemble(set: &EncodedSet, indices: &[usize], path: InputPath) -> Batch<T> {
        let b = indices.len();
        let words = (path == InputPath::Words).then(|| {
            let d = set.word_dim;
            let mut data = Vec::with_capacity(b * MAX_WORDS * d);
            for &i in indices {
                data.extend(set.word_matrix(i).into_iter().map(|x| T::from_f32(x).expect("finite")));
            }
            Tensor::new(&[b, MAX_WORDS, d], data).expect("word batch shape")
        });
        let mut chars = Vec::new();
        if path != InputPath::Words {
            chars.reserve(b * MAX_CHARS);
            for &i in indices {
                let s = &set.samples[i];
                let src = if path == InputPath::CharsExpanded { &s.chars_expanded } else { &s.chars };
                chars.extend(src.iter().map(|&c| c as u32));
            }
        }
        let mut aux = Vec::with_capacity(b * AUX_DIM);
        for &i in indices {
            aux.extend(set.samples[i].aux.iter().map(|&x| T::from_f32(x).expect("finite")));
        }
        Batch {
            size: b,
            words,
            chars,
            aux: Tensor::new(&[b, AUX_DIM], aux).expect("aux batch shape"),
            gold: if set.is_labeled() {
                indices.iter().map(|&i| set.labels[i].index()).collect()
            } else {
                Vec::new()
            },
        }
    }
}
