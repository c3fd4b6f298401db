//! Pretrained word-vector tables in the whitespace-separated text format and
//! the fixed 40-row word matrices fed to the word-level CNN.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::TokenSeq;

pub const MAX_WORDS: usize = 40;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("line {line}: non-numeric component {token:?}")]
    NonNumeric { line: usize, token: String },
    #[error("header declares {declared} words but the file has {found}")]
    VocabCount { declared: usize, found: usize },
    #[error("embedding file has no vectors")]
    Empty,
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    words: Vec<String>,
    vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub fn from_entries(dim: usize, entries: Vec<(String, Vec<f32>)>) -> Result<EmbeddingTable> {
        let mut table = EmbeddingTable {
            dim,
            index: HashMap::new(),
            words: Vec::new(),
            vectors: Vec::new(),
        };
        for (i, (word, v)) in entries.into_iter().enumerate() {
            if v.len() != dim {
                return Err(EmbeddingError::Dimension {
                    line: i + 1,
                    expected: dim,
                    found: v.len(),
                });
            }
            table.push(i + 1, word, &v)?;
        }
        if table.words.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        Ok(table)
    }

    fn push(&mut self, line: usize, word: String, v: &[f32]) -> Result<()> {
        if self.index.contains_key(&word) {
            return Err(EmbeddingError::DuplicateWord { line, word });
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Table vector for known words, hashed pseudo-random vector otherwise.
    pub fn vector_or_oov(&self, word: &str) -> Vec<f32> {
        match self.get(word) {
            Some(v) => v.to_vec(),
            None => oov_vector(word, self.dim),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.words.len(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for x in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Parses `word v1 ... vD` lines with an optional `V D` header. Without a
/// header the dimension is taken from the first vector and must equal
/// `expected_dim`.
pub fn parse_embeddings(content: &str, expected_dim: usize) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable {
        dim: expected_dim,
        index: HashMap::new(),
        words: Vec::new(),
        vectors: Vec::new(),
    };
    let mut declared = None;
    let mut row = Vec::with_capacity(expected_dim);
    for (n, line) in content.lines().enumerate() {
        let line_no = n + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if table.words.is_empty() && declared.is_none() && rest.len() == 1 {
            if let (Ok(v), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                if d != expected_dim {
                    return Err(EmbeddingError::Dimension {
                        line: line_no,
                        expected: expected_dim,
                        found: d,
                    });
                }
                declared = Some(v);
                continue;
            }
        }
        if rest.len() != expected_dim {
            return Err(EmbeddingError::Dimension {
                line: line_no,
                expected: expected_dim,
                found: rest.len(),
            });
        }
        row.clear();
        for tok in rest {
            let x: f64 = tok.parse().map_err(|_| EmbeddingError::NonNumeric {
                line: line_no,
                token: tok.to_string(),
            })?;
            row.push(x as f32);
        }
        table.push(line_no, word.to_string(), &row)?;
    }
    if table.words.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    if let Some(v) = declared {
        if v != table.words.len() {
            return Err(EmbeddingError::VocabCount {
                declared: v,
                found: table.words.len(),
            });
        }
    }
    Ok(table)
}

pub fn load_embeddings(path: &Path, expected_dim: usize) -> Result<EmbeddingTable> {
    let content = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(&content, expected_dim)
}

/// Reads only the dimension of an embedding file (header or first vector).
pub fn sniff_dim(path: &Path) -> Result<usize> {
    let content = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let first = content
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or(EmbeddingError::Empty)?;
    let fields: Vec<&str> = first.split_whitespace().collect();
    if fields.len() == 2 {
        if let (Ok(_), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
            return Ok(d);
        }
    }
    Ok(fields.len() - 1)
}

/// Stable 64-bit seed for a word: first 8 bytes of its SHA-256 digest.
pub fn word_seed(word: &str) -> u64 {
    let digest = Sha256::digest(word.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Deterministic vector for an out-of-vocabulary word: uniform components
/// rescaled so the largest magnitude is 1.
pub fn oov_vector(word: &str, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(word_seed(word));
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max > 0.0 {
        v.iter_mut().for_each(|x| *x /= max);
    }
    v.into_iter().map(|x| x as f32).collect()
}

/// 40 × dim row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WordMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl WordMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        MAX_WORDS
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Embeds the leading `max_len` (≤ 40) tokens; remaining rows stay zero.
pub fn embed_words(t: &TokenSeq, table: &EmbeddingTable, max_len: usize) -> WordMatrix {
    let dim = table.dim();
    let mut data = vec![0.0f32; MAX_WORDS * dim];
    for (i, tok) in t.iter().take(max_len.min(MAX_WORDS)).enumerate() {
        let row = &mut data[i * dim..(i + 1) * dim];
        match table.get(tok) {
            Some(v) => row.copy_from_slice(v),
            None => row.copy_from_slice(&oov_vector(tok, dim)),
        }
    }
    WordMatrix { dim, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tokenize;

    const FIXTURE: &str = "3 4\nweed 0.1 0.2 0.3 0.4\nhigh -1 0 1 2\nnews 5e-1 0 0 0\n";

    #[test]
    fn loads_fixture() {
        let t = parse_embeddings(FIXTURE, 4).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.get("high").unwrap(), [-1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn short_line_is_reported() {
        let err = parse_embeddings("weed 0.1 0.2 0.3 0.4\nhigh 1 2 3\n", 4).unwrap_err();
        assert!(matches!(err, EmbeddingError::Dimension { line: 2, expected: 4, found: 3 }));
    }

    #[test]
    fn headerless_and_errors() {
        let t = parse_embeddings("weed 1 2\nhigh 3 4\n", 2).unwrap();
        assert_eq!(t.dim(), 2);
        assert!(matches!(
            parse_embeddings("weed 1 2\nhigh 3 4\n", 3).unwrap_err(),
            EmbeddingError::Dimension { line: 1, .. }
        ));
        assert!(matches!(
            parse_embeddings("a 1 2\na 3 4\n", 2).unwrap_err(),
            EmbeddingError::DuplicateWord { line: 2, .. }
        ));
        assert!(matches!(
            parse_embeddings("a 1 x\n", 2).unwrap_err(),
            EmbeddingError::NonNumeric { line: 1, .. }
        ));
        assert!(matches!(
            parse_embeddings("5 2\na 1 2\n", 2).unwrap_err(),
            EmbeddingError::VocabCount { declared: 5, found: 1 }
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let t = parse_embeddings(FIXTURE, 4).unwrap();
        assert_eq!(parse_embeddings(&t.to_text(), 4).unwrap(), t);
    }

    #[test]
    fn word_matrix_shape_and_lookup() {
        let table = parse_embeddings(FIXTURE, 4).unwrap();
        let empty = embed_words(&tokenize(""), &table, MAX_WORDS);
        assert!(empty.as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(empty.as_slice().len(), 40 * 4);

        let m = embed_words(&tokenize("weed unknownword"), &table, MAX_WORDS);
        assert_eq!(m.row(0), table.get("weed").unwrap());
        let oov = m.row(1);
        assert_eq!(oov, oov_vector("unknownword", 4).as_slice());
        let max = oov.iter().fold(0.0f32, |a, x| a.max(x.abs()));
        assert!((max - 1.0).abs() < 1e-6);
        assert!(m.row(2).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn truncates_to_forty() {
        let table = parse_embeddings(FIXTURE, 4).unwrap();
        let text: Vec<String> = (0..50).map(|i| if i < 40 { "weed".into() } else { format!("w{i}") }).collect();
        let m = embed_words(&tokenize(&text.join(" ")), &table, MAX_WORDS);
        for i in 0..40 {
            assert_eq!(m.row(i), table.get("weed").unwrap());
        }
    }

    #[test]
    fn oov_is_stable_and_distinct() {
        // Frozen: the seed depends only on the word bytes.
        assert_eq!(word_seed("snow"), word_seed("snow"));
        assert_eq!(oov_vector("snow", 8), oov_vector("snow", 8));
        assert_ne!(oov_vector("snow", 8), oov_vector("snort", 8));
    }
}
