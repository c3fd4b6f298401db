use std::collections::{BTreeSet, HashMap};

use crate::features::{AuxVector, TokenSeq};

/// Sparse TF-IDF part (sorted by term index) followed by dense aux entries.
/// Feature `i < offset` is a vocabulary term, `offset + j` is aux entry `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BowVector {
    pub sparse: Vec<(u32, f64)>,
    pub aux: Vec<f64>,
    pub offset: usize,
}

impl BowVector {
    pub fn dim(&self) -> usize {
        self.offset + self.aux.len()
    }

    /// Non-zero entries as `(feature, value)`, in feature order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.sparse
            .iter()
            .map(|&(i, v)| (i as usize, v))
            .chain(self.aux.iter().enumerate().map(|(j, &v)| (self.offset + j, v)))
            .filter(|&(_, v)| v != 0.0)
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries().map(|(i, v)| w[i] * v).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries().map(|(_, v)| v * v).sum()
    }

    pub fn to_dense_f32(&self) -> Vec<f32> {
        let mut out = vec![0.0f32; self.dim()];
        for (i, v) in self.entries() {
            out[i] = v as f32;
        }
        out
    }

    pub fn scaled(&self, c: f64) -> BowVector {
        BowVector {
            sparse: self.sparse.iter().map(|&(i, v)| (i, v * c)).collect(),
            aux: self.aux.iter().map(|v| v * c).collect(),
            offset: self.offset,
        }
    }
}

/// Vocabulary and smoothed inverse document frequencies fitted on training
/// documents: `idf = ln((N + 1) / (df + 1)) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfVectorizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    idf: Vec<f64>,
}

impl TfidfVectorizer {
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a TokenSeq>) -> TfidfVectorizer {
        let mut df: HashMap<&str, usize> = HashMap::new();
        let mut n = 0usize;
        for doc in docs {
            n += 1;
            let uniq: BTreeSet<&str> = doc.iter().collect();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut vocab: Vec<String> = df.keys().map(|s| s.to_string()).collect();
        vocab.sort();
        let idf = vocab
            .iter()
            .map(|t| idf_value(n, df[t.as_str()]))
            .collect();
        TfidfVectorizer::from_parts(vocab, idf)
    }

    pub fn from_parts(vocab: Vec<String>, idf: Vec<f64>) -> TfidfVectorizer {
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        TfidfVectorizer { vocab, index, idf }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn idf_weights(&self) -> &[f64] {
        &self.idf
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index.get(term).map(|&i| self.idf[i as usize])
    }

    pub fn dim(&self) -> usize {
        self.vocab.len() + crate::features::AUX_DIM
    }

    /// Raw term counts times idf, L2-normalized; unseen terms are ignored.
    /// The aux vector is appended unnormalized.
    pub fn vectorize(&self, t: &TokenSeq, aux: &AuxVector) -> BowVector {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for tok in t.iter() {
            if let Some(&i) = self.index.get(tok) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut sparse: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i as usize]))
            .collect();
        sparse.sort_unstable_by_key(|&(i, _)| i);
        let norm = sparse.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut sparse {
                *v /= norm;
            }
        }
        BowVector {
            sparse,
            aux: aux.as_slice().to_vec(),
            offset: self.vocab.len(),
        }
    }
}

fn idf_value(n: usize, df: usize) -> f64 {
    ((n as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}
