//! Tokenization, lexicon/cluster features, synonym expansion, the auxiliary
//! feature vector and character encoding.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Number of word clusters in the cluster feature block.
pub const NUM_CLUSTERS: usize = 150;
/// Length of the auxiliary vector: 2 abuse + 2 slang + 150 cluster entries.
pub const AUX_DIM: usize = 4 + NUM_CLUSTERS;
/// Characters kept per tweet by the character encoder.
pub const MAX_CHARS: usize = 280;
/// Slang lexicon terms must be strictly longer than this many characters.
pub const SLANG_MIN_EXCLUSIVE: usize = 5;

pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "<user>";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, FeatureError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Tokenization

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> TokenSeq {
        TokenSeq(tokens.into_iter().filter(|t| !t.is_empty()).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '…' | '“' | '”' | '‘' | '’' | '«' | '»' | '¡' | '¿' | '–' | '—')
}

fn normalize_piece(piece: &str) -> Option<String> {
    let lower = piece.to_lowercase();
    if lower == URL_TOKEN || lower == USER_TOKEN {
        return Some(lower);
    }
    let core = lower.trim_start_matches(|c: char| is_punct(c) && c != '#' && c != '@');
    if core.starts_with("http://") || core.starts_with("https://") || core.starts_with("www.") {
        return Some(URL_TOKEN.to_string());
    }
    let core = core.trim_end_matches(is_punct);
    if core.is_empty() || core.chars().all(|c| c == '#' || c == '@') {
        return None;
    }
    if core.starts_with('@') {
        return Some(USER_TOKEN.to_string());
    }
    Some(core.to_string())
}

/// Lowercases, maps URLs to `<url>` and mentions to `<user>`, splits on
/// whitespace and strips edge punctuation (a leading `#` is kept).
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(text.split_whitespace().filter_map(normalize_piece).collect())
}

/// Lexicon/cluster lookups ignore the hashtag marker.
fn lookup_key(token: &str) -> &str {
    token.trim_start_matches('#')
}

// ---------------------------------------------------------------------------
// Lexicons, clusters, synonyms

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    terms: HashSet<String>,
}

impl Lexicon {
    /// `min_len_exclusive`: drop terms with this many characters or fewer.
    pub fn from_terms<I, S>(terms: I, min_len_exclusive: usize) -> Lexicon
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms = terms
            .into_iter()
            .map(|t| t.as_ref().trim().to_lowercase())
            .filter(|t| !t.is_empty() && t.chars().count() > min_len_exclusive)
            .collect();
        Lexicon { terms }
    }

    pub fn parse(content: &str, min_len_exclusive: usize) -> Lexicon {
        Lexicon::from_terms(
            content
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
            min_len_exclusive,
        )
    }

    pub fn load_abuse(path: &Path) -> Result<Lexicon> {
        Ok(Lexicon::parse(&read(path)?, 0))
    }

    /// Slang lexicon: only terms longer than five characters are kept.
    pub fn load_slang(path: &Path) -> Result<Lexicon> {
        Ok(Lexicon::parse(&read(path)?, SLANG_MIN_EXCLUSIVE))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.terms.contains(lookup_key(token))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterMap {
    map: HashMap<String, u8>,
}

impl ClusterMap {
    pub fn from_pairs<I, S>(pairs: I) -> std::result::Result<ClusterMap, String>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: AsRef<str>,
    {
        let mut map = HashMap::new();
        for (term, id) in pairs {
            if id >= NUM_CLUSTERS {
                return Err(format!("cluster id {id} outside [0, {NUM_CLUSTERS})"));
            }
            map.insert(term.as_ref().to_lowercase(), id as u8);
        }
        Ok(ClusterMap { map })
    }

    /// `term<TAB>cluster_id` lines.
    pub fn parse(content: &str) -> Result<ClusterMap> {
        let mut map = HashMap::new();
        for (n, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| FeatureError::Parse { line: n + 1, message };
            let (term, id) = line
                .split_once('\t')
                .ok_or_else(|| err("expected term<TAB>cluster_id".into()))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| err(format!("bad cluster id {id:?}")))?;
            if id >= NUM_CLUSTERS {
                return Err(err(format!("cluster id {id} outside [0, {NUM_CLUSTERS})")));
            }
            map.insert(term.trim().to_lowercase(), id as u8);
        }
        Ok(ClusterMap { map })
    }

    pub fn load(path: &Path) -> Result<ClusterMap> {
        ClusterMap::parse(&read(path)?)
    }

    pub fn cluster_of(&self, token: &str) -> Option<usize> {
        self.map.get(lookup_key(token)).map(|&c| c as usize)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymMap {
    map: HashMap<String, Vec<String>>,
}

impl SynonymMap {
    pub fn insert(&mut self, term: &str, synonyms: &[&str]) {
        let term = term.trim().to_lowercase();
        let list: Vec<String> = synonyms
            .iter()
            .map(|s| s.trim().to_lowercase())
            .filter(|s| !s.is_empty() && *s != term)
            .collect();
        if !list.is_empty() {
            self.map.entry(term).or_default().extend(list);
        }
    }

    /// `term<TAB>syn1,syn2,...` lines. Self-references are dropped.
    pub fn parse(content: &str) -> Result<SynonymMap> {
        let mut out = SynonymMap::default();
        for (n, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (term, syns) = line.split_once('\t').ok_or_else(|| FeatureError::Parse {
                line: n + 1,
                message: "expected term<TAB>syn1,syn2,...".into(),
            })?;
            let syns: Vec<&str> = syns.split(',').collect();
            out.insert(term, &syns);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<SynonymMap> {
        SynonymMap::parse(&read(path)?)
    }

    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.map.get(token).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub const DEFAULT_MAX_SYNONYMS: usize = 10;

/// Appends synonyms of the tokens after the original sequence, in
/// first-occurrence order, skipping words already present and stopping after
/// `max_append` additions.
pub fn expand_synonyms(t: &TokenSeq, syn: &SynonymMap, max_append: usize) -> TokenSeq {
    let mut out = t.0.clone();
    let mut present: HashSet<String> = t.0.iter().cloned().collect();
    let mut appended = 0;
    'outer: for token in &t.0 {
        let Some(list) = syn.get(token) else { continue };
        for s in list {
            if appended == max_append {
                break 'outer;
            }
            if present.insert(s.clone()) {
                out.push(s.clone());
                appended += 1;
            }
        }
    }
    TokenSeq(out)
}

/// `[abuse present, abuse hits, slang present, slang hits]`, hits counted
/// with multiplicity over tokens.
pub fn lexicon_features(t: &TokenSeq, abuse: &Lexicon, slang: &Lexicon) -> [f64; 4] {
    let abuse_hits = t.iter().filter(|tok| abuse.contains(tok)).count();
    let slang_hits = t.iter().filter(|tok| slang.contains(tok)).count();
    [
        (abuse_hits > 0) as u8 as f64,
        abuse_hits as f64,
        (slang_hits > 0) as u8 as f64,
        slang_hits as f64,
    ]
}

/// Multi-hot presence over the 150 clusters.
pub fn cluster_features(t: &TokenSeq, cm: &ClusterMap) -> Vec<f64> {
    let mut v = vec![0.0; NUM_CLUSTERS];
    for c in t.iter().filter_map(|tok| cm.cluster_of(tok)) {
        v[c] = 1.0;
    }
    v
}

/// The 154-entry engineered feature vector:
/// `[abuse_presence, abuse_count, slang_presence, slang_count, cluster_hot[0..150)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxVector(Vec<f64>);

impl AuxVector {
    pub fn zeros() -> AuxVector {
        AuxVector(vec![0.0; AUX_DIM])
    }

    pub fn from_vec(v: Vec<f64>) -> Option<AuxVector> {
        (v.len() == AUX_DIM).then_some(AuxVector(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> AuxVector {
        AuxVector(self.0.iter().map(|x| x * factor).collect())
    }
}

/// Lexicons and cluster/synonym tables shared by all feature extraction.
#[derive(Debug, Clone, Default)]
pub struct FeatureTables {
    pub abuse: Lexicon,
    pub slang: Lexicon,
    pub clusters: ClusterMap,
    pub synonyms: SynonymMap,
    pub max_synonyms: usize,
}

impl FeatureTables {
    pub fn aux(&self, t: &TokenSeq) -> AuxVector {
        build_aux_vector(t, &self.abuse, &self.slang, &self.clusters)
    }

    pub fn expand(&self, t: &TokenSeq) -> TokenSeq {
        expand_synonyms(t, &self.synonyms, self.max_synonyms)
    }
}

pub fn build_aux_vector(t: &TokenSeq, abuse: &Lexicon, slang: &Lexicon, cm: &ClusterMap) -> AuxVector {
    let mut v = Vec::with_capacity(AUX_DIM);
    v.extend_from_slice(&lexicon_features(t, abuse, slang));
    v.extend(cluster_features(t, cm));
    AuxVector(v)
}

// ---------------------------------------------------------------------------
// Character encoding

pub const PAD_INDEX: u32 = 0;
pub const UNKNOWN_INDEX: u32 = 1;

/// Letters, digits, space and the 32 ASCII punctuation marks (69 symbols).
pub const CHARSET: &str =
    "abcdefghijklmnopqrstuvwxyz0123456789 !\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Pad + unknown + charset.
pub const CHARSET_SIZE: usize = 2 + 69;

fn char_index(c: char) -> u32 {
    match c {
        'a'..='z' => 2 + (c as u32 - 'a' as u32),
        '0'..='9' => 28 + (c as u32 - '0' as u32),
        _ => CHARSET
            .char_indices()
            .skip(36)
            .find(|&(_, x)| x == c)
            .map_or(UNKNOWN_INDEX, |(i, _)| 2 + i as u32),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharSeq(Vec<u32>);

impl CharSeq {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn from_indices(v: Vec<u32>) -> Option<CharSeq> {
        (v.len() == MAX_CHARS && v.iter().all(|&i| (i as usize) < CHARSET_SIZE)).then_some(CharSeq(v))
    }
}

/// Lowercases, maps characters into the charset (unknown → 1), truncates to
/// 280 and right-pads with 0.
pub fn encode_chars(text: &str) -> CharSeq {
    let mut v: Vec<u32> = text
        .to_lowercase()
        .chars()
        .take(MAX_CHARS)
        .map(char_index)
        .collect();
    v.resize(MAX_CHARS, PAD_INDEX);
    CharSeq(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> TokenSeq {
        TokenSeq::new(s.iter().map(|x| x.to_string()).collect())
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Love This!"), toks(&["love", "this"]));
        assert_eq!(tokenize(""), toks(&[]));
        assert_eq!(
            tokenize("high af http://t.co/x @bob #weed"),
            toks(&["high", "af", "<url>", "<user>", "#weed"])
        );
        assert_eq!(tokenize("(@bob: \"wow\"... #!"), toks(&["<user>", "wow"]));
        assert_eq!(tokenize("don't stop"), toks(&["don't", "stop"]));
    }

    #[test]
    fn synonym_expansion() {
        let mut syn = SynonymMap::default();
        syn.insert("happy", &["glad"]);
        syn.insert("joyful", &["glad", "cheerful"]);
        assert_eq!(expand_synonyms(&toks(&["happy"]), &syn, 10), toks(&["happy", "glad"]));
        assert_eq!(
            expand_synonyms(&toks(&["happy", "joyful"]), &syn, 10),
            toks(&["happy", "joyful", "glad", "cheerful"])
        );
        assert_eq!(expand_synonyms(&toks(&["happy", "joyful"]), &syn, 1).len(), 3);
        let t = toks(&["a", "b"]);
        assert_eq!(expand_synonyms(&t, &SynonymMap::default(), 10), t);
    }

    #[test]
    fn synonym_file_drops_self_reference() {
        let syn = SynonymMap::parse("pot\tpot,weed\n").unwrap();
        assert_eq!(syn.get("pot").unwrap(), ["weed".to_string()]);
        assert!(SynonymMap::parse("no tab here\n").is_err());
    }

    #[test]
    fn lexicon_counts() {
        let abuse = Lexicon::parse("# comment\nhigh\nstoned\n", 0);
        let slang = Lexicon::parse("coke\nblunts\n", SLANG_MIN_EXCLUSIVE);
        assert_eq!(slang.len(), 1, "length-4 slang term is dropped at load");
        let t = toks(&["so", "high", "and", "stoned"]);
        assert_eq!(lexicon_features(&t, &abuse, &slang), [1.0, 2.0, 0.0, 0.0]);
        assert_eq!(lexicon_features(&toks(&["coke"]), &abuse, &slang), [0.0; 4]);
        assert_eq!(lexicon_features(&toks(&["blunts", "#blunts"]), &abuse, &slang), [0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn cluster_presence() {
        let cm = ClusterMap::parse("weed\t7\npot\t7\nbeer\t3\n").unwrap();
        assert!(cluster_features(&toks(&["hello"]), &cm).iter().all(|&x| x == 0.0));
        let one = cluster_features(&toks(&["weed"]), &cm);
        assert_eq!(one[7], 1.0);
        assert_eq!(one.iter().sum::<f64>(), 1.0);
        let two = cluster_features(&toks(&["weed", "pot"]), &cm);
        assert_eq!(two, one);
        assert!(ClusterMap::parse("x\t150\n").is_err());
    }

    #[test]
    fn aux_layout() {
        let abuse = Lexicon::parse("high\n", 0);
        let slang = Lexicon::parse("blunts\n", SLANG_MIN_EXCLUSIVE);
        let cm = ClusterMap::parse("weed\t0\n").unwrap();
        let v = build_aux_vector(&toks(&["blunts", "blunts", "weed"]), &abuse, &slang, &cm);
        assert_eq!(v.as_slice().len(), AUX_DIM);
        assert_eq!(v.as_slice()[3], 2.0);
        assert_eq!(v.as_slice()[4], 1.0);
        assert_eq!(build_aux_vector(&toks(&[]), &abuse, &slang, &cm), AuxVector::zeros());
    }

    #[test]
    fn char_encoding() {
        let a = encode_chars("a");
        assert_eq!(a.as_slice()[0], 2);
        assert!(a.as_slice()[1..].iter().all(|&i| i == PAD_INDEX));
        assert_eq!(encode_chars("A"), a);
        let long: String = "x".repeat(300);
        let enc = encode_chars(&long);
        assert!(enc.as_slice().iter().all(|&i| i == char_index('x')));
        assert_eq!(encode_chars("é").as_slice()[0], UNKNOWN_INDEX);
        assert_eq!(CHARSET.chars().count(), 69);
    }

    #[test]
    fn charset_indices_are_distinct() {
        let idx: HashSet<u32> = CHARSET.chars().map(char_index).collect();
        assert_eq!(idx.len(), 69);
        assert!(idx.iter().all(|&i| i >= 2 && (i as usize) < CHARSET_SIZE));
    }

    proptest! {
        #[test]
        fn tokenize_idempotent(s in "\\PC{0,60}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join()), once.clone());
            prop_assert!(once.iter().all(|t| !t.is_empty()));
        }

        #[test]
        fn aux_always_154(words in proptest::collection::vec("[a-z#@]{0,8}", 0..30)) {
            let abuse = Lexicon::parse("high\nweed\n", 0);
            let slang = Lexicon::parse("stoned\n", SLANG_MIN_EXCLUSIVE);
            let cm = ClusterMap::parse("weed\t1\nhigh\t149\n").unwrap();
            let t = tokenize(&words.join(" "));
            let v = build_aux_vector(&t, &abuse, &slang, &cm);
            prop_assert_eq!(v.as_slice().len(), AUX_DIM);
            let s = v.as_slice();
            prop_assert_eq!(s[0], (s[1] > 0.0) as u8 as f64);
            prop_assert_eq!(s[2], (s[3] > 0.0) as u8 as f64);
        }

        #[test]
        fn chars_always_280(s in "\\PC{0,400}") {
            let c = encode_chars(&s);
            prop_assert_eq!(c.as_slice().len(), MAX_CHARS);
            prop_assert!(c.as_slice().iter().all(|&i| (i as usize) < CHARSET_SIZE));
        }
    }
}
