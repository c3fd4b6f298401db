//! Labeled tweet datasets, annotation aggregation, deduplication and the
//! class-ratio scenario / fold bookkeeping used by every experiment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} tab-separated columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid label token {token:?}")]
    InvalidLabel { line: usize, token: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {message}")]
    InvalidRecord { line: usize, message: String },
    #[error("invalid tweet: {0}")]
    InvalidTweet(String),
    #[error("dataset contains unlabeled item {0:?}")]
    Unlabeled(String),
    #[error("invalid scenario plan: {0}")]
    InvalidPlan(String),
    #[error("insufficient {class} items: need {needed}, pool has {available} (short by {})", .needed - .available)]
    Shortfall {
        class: Label,
        needed: usize,
        available: usize,
    },
    #[error("unknown item id {0:?} in fold plan")]
    UnknownItem(String),
    #[error("label aggregation rejected {} item(s): {}", .0.rejected.len(), .0.describe())]
    Aggregation(Box<AggregationReport>),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Binary class. Discriminants are the on-disk tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Negative
        } else {
            Label::Positive
        }
    }

    pub fn from_bool(positive: bool) -> Label {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn flip(self) -> Label {
        Label::from_bool(!self.is_positive())
    }

    pub fn token(self) -> &'static str {
        match self {
            Label::Negative => "0",
            Label::Positive => "1",
        }
    }

    pub fn parse_token(token: &str) -> Option<Label> {
        match token {
            "0" => Some(Label::Negative),
            "1" => Some(Label::Positive),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Negative => "negative",
            Label::Positive => "positive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    pub label: Option<Label>,
}

impl Tweet {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<Label>) -> Result<Tweet> {
        let id = id.into();
        let text = text.into();
        if id.is_empty() || id.contains(['\t', '\n', '\r']) {
            return Err(CorpusError::InvalidTweet(format!("bad id {id:?}")));
        }
        if text.trim().is_empty() {
            return Err(CorpusError::InvalidTweet(format!("empty text for {id:?}")));
        }
        if text.contains(['\n', '\r']) {
            return Err(CorpusError::InvalidTweet(format!("line break in text of {id:?}")));
        }
        Ok(Tweet { id, text, label })
    }
}

/// Ordered collection of tweets with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    items: Vec<Tweet>,
}

impl Dataset {
    pub fn new(items: Vec<Tweet>) -> Result<Dataset> {
        let mut seen = HashSet::with_capacity(items.len());
        for (i, t) in items.iter().enumerate() {
            if !seen.insert(t.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    id: t.id.clone(),
                });
            }
        }
        Ok(Dataset { items })
    }

    pub fn items(&self) -> &[Tweet] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn all_labeled(&self) -> bool {
        self.items.iter().all(|t| t.label.is_some())
    }

    /// Labels of a fully labeled dataset, in item order.
    pub fn labels(&self) -> Result<Vec<Label>> {
        self.items
            .iter()
            .map(|t| t.label.ok_or_else(|| CorpusError::Unlabeled(t.id.clone())))
            .collect()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|t| t.text.as_str())
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|t| t.label == Some(label)).count()
    }

    /// Items at the given positions, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
        }
    }

    pub fn into_items(self) -> Vec<Tweet> {
        self.items
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.items {
            let label = t.label.map_or("-", Label::token);
            out.push_str(&t.id);
            out.push('\t');
            out.push_str(label);
            out.push('\t');
            out.push_str(&t.text);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(io_err(path))
    }
}

/// Parses `id<TAB>label<TAB>text` records. Blank lines are skipped; the
/// text column keeps any further tabs verbatim.
pub fn parse_dataset(content: &str) -> Result<Dataset> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (n, raw) in content.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        if cols.len() != 3 {
            return Err(CorpusError::ColumnCount {
                line: line_no,
                expected: 3,
                found: cols.len(),
            });
        }
        let label = match cols[1] {
            "-" => None,
            tok => Some(Label::parse_token(tok).ok_or_else(|| CorpusError::InvalidLabel {
                line: line_no,
                token: tok.to_string(),
            })?),
        };
        if !seen.insert(cols[0].to_string()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: cols[0].to_string(),
            });
        }
        let tweet = Tweet::new(cols[0], cols[2], label).map_err(|e| CorpusError::InvalidRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        items.push(tweet);
    }
    Ok(Dataset { items })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    parse_dataset(&content)
}

/// Normalized text used as the duplicate key: lowercased, whitespace runs
/// collapsed to one space, trimmed.
pub fn dedupe_key(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Keeps the first item for each normalized text. Returns the surviving
/// dataset and the number of removed items.
pub fn dedupe(d: &Dataset) -> (Dataset, usize) {
    let mut seen = HashSet::new();
    let items: Vec<Tweet> = d
        .items
        .iter()
        .filter(|t| seen.insert(dedupe_key(&t.text)))
        .cloned()
        .collect();
    let removed = d.len() - items.len();
    (Dataset { items }, removed)
}

// ---------------------------------------------------------------------------
// Annotations

/// Per-item annotator judgements.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    entries: BTreeMap<String, Vec<(String, Label)>>,
}

impl AnnotationSet {
    pub fn new() -> AnnotationSet {
        AnnotationSet::default()
    }

    /// Adds one judgement. Returns `false` (and leaves the set unchanged)
    /// when the annotator already labeled the item.
    pub fn add(&mut self, item: &str, annotator: &str, label: Label) -> bool {
        let list = self.entries.entry(item.to_string()).or_default();
        if list.iter().any(|(a, _)| a == annotator) {
            return false;
        }
        list.push((annotator.to_string(), label));
        true
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<(String, Label)>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Labels per item, dropping annotator identity.
    pub fn values(&self) -> impl Iterator<Item = (&str, Vec<Label>)> {
        self.entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.iter().map(|(_, l)| *l).collect()))
    }
}

pub fn parse_annotations(content: &str) -> Result<AnnotationSet> {
    let mut set = AnnotationSet::new();
    for (n, raw) in content.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(CorpusError::ColumnCount {
                line: line_no,
                expected: 3,
                found: cols.len(),
            });
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(CorpusError::InvalidRecord {
                line: line_no,
                message: "empty item or annotator id".into(),
            });
        }
        let label = Label::parse_token(cols[2]).ok_or_else(|| CorpusError::InvalidLabel {
            line: line_no,
            token: cols[2].to_string(),
        })?;
        if !set.add(cols[0], cols[1], label) {
            return Err(CorpusError::InvalidRecord {
                line: line_no,
                message: format!("annotator {:?} labeled {:?} twice", cols[1], cols[0]),
            });
        }
    }
    Ok(set)
}

pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    parse_annotations(&content)
}

/// Items that could not be aggregated, alongside the labels that could.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationReport {
    pub labels: BTreeMap<String, Label>,
    /// (item id, annotation count)
    pub rejected: Vec<(String, usize)>,
}

impl AggregationReport {
    fn describe(&self) -> String {
        self.rejected
            .iter()
            .map(|(id, n)| format!("{id} ({n} annotations)"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Majority label per item. Every item needs an odd number (at least three)
/// of annotations; otherwise the whole call fails with a report listing the
/// rejected items and the labels that were aggregated.
pub fn aggregate_labels(ann: &AnnotationSet) -> Result<BTreeMap<String, Label>> {
    let mut labels = BTreeMap::new();
    let mut rejected = Vec::new();
    for (item, votes) in ann.values() {
        let n = votes.len();
        if n < 3 || n % 2 == 0 {
            rejected.push((item.to_string(), n));
            continue;
        }
        let pos = votes.iter().filter(|l| l.is_positive()).count();
        labels.insert(item.to_string(), Label::from_bool(2 * pos > n));
    }
    if rejected.is_empty() {
        Ok(labels)
    } else {
        Err(CorpusError::Aggregation(Box::new(AggregationReport { labels, rejected })))
    }
}

// ---------------------------------------------------------------------------
// Scenarios and folds

/// Class-ratio resampling plan: `positive_pct : (100 - positive_pct)` with
/// fixed train/test sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioPlan {
    positive_pct: u32,
    negative_pct: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl ScenarioPlan {
    pub fn new(
        positive_pct: u32,
        negative_pct: u32,
        n_train: usize,
        n_test: usize,
        seed: u64,
    ) -> Result<ScenarioPlan> {
        if positive_pct + negative_pct != 100 {
            return Err(CorpusError::InvalidPlan(format!(
                "ratio {positive_pct}:{negative_pct} does not sum to 100"
            )));
        }
        if n_test == 0 {
            return Err(CorpusError::InvalidPlan("n_test must be positive".into()));
        }
        for (what, n) in [("n_train", n_train), ("n_test", n_test)] {
            if !(n * positive_pct as usize).is_multiple_of(100) {
                return Err(CorpusError::InvalidPlan(format!(
                    "{what}={n} at {positive_pct}% positive is not a whole count"
                )));
            }
        }
        Ok(ScenarioPlan {
            positive_pct,
            negative_pct,
            n_train,
            n_test,
            seed,
        })
    }

    /// The five dataset variants: 50:50 down to 10:90.
    pub fn table2(seed: u64) -> Vec<ScenarioPlan> {
        [(50, 3450, 690), (40, 2850, 570), (30, 2450, 490), (20, 2150, 430), (10, 1900, 380)]
            .into_iter()
            .map(|(p, tr, te)| ScenarioPlan::new(p, 100 - p, tr, te, seed).expect("valid table rows"))
            .collect()
    }

    pub fn positive_pct(&self) -> u32 {
        self.positive_pct
    }

    pub fn negative_pct(&self) -> u32 {
        self.negative_pct
    }

    pub fn with_seed(mut self, seed: u64) -> ScenarioPlan {
        self.seed = seed;
        self
    }

    /// `"50:50"` style name.
    pub fn ratio_name(&self) -> String {
        format!("{}:{}", self.positive_pct, self.negative_pct)
    }

    pub fn train_counts(&self) -> ClassCounts {
        let pos = self.n_train * self.positive_pct as usize / 100;
        ClassCounts {
            positive: pos,
            negative: self.n_train - pos,
        }
    }

    pub fn test_counts(&self) -> ClassCounts {
        let pos = self.n_test * self.positive_pct as usize / 100;
        ClassCounts {
            positive: pos,
            negative: self.n_test - pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

impl ClassCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Positive => self.positive,
            Label::Negative => self.negative,
        }
    }

    pub fn total(&self) -> usize {
        self.positive + self.negative
    }

    pub fn of(d: &Dataset) -> ClassCounts {
        ClassCounts {
            positive: d.count(Label::Positive),
            negative: d.count(Label::Negative),
        }
    }
}

/// Pool indices per class, each shuffled with the plan seed.
fn shuffled_classes(pool: &Dataset, seed: u64) -> Result<[Vec<usize>; 2]> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, t) in pool.items.iter().enumerate() {
        let label = t.label.ok_or_else(|| CorpusError::Unlabeled(t.id.clone()))?;
        by_class[label.index()].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    by_class[Label::Positive.index()].shuffle(&mut rng);
    by_class[Label::Negative.index()].shuffle(&mut rng);
    Ok(by_class)
}

fn require(label: Label, needed: usize, available: usize) -> Result<()> {
    if needed > available {
        Err(CorpusError::Shortfall {
            class: label,
            needed,
            available,
        })
    } else {
        Ok(())
    }
}

/// Draws a stratified train/test split with exact class counts. Within each
/// class the seeded shuffle order is consumed test-first, then train; the
/// returned datasets keep pool order.
pub fn make_scenario(pool: &Dataset, plan: &ScenarioPlan) -> Result<(Dataset, Dataset)> {
    let folds = make_folds(pool, plan, 1)?;
    Ok(folds.materialize(pool, 0))
}

/// One cross-validation split, as item ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub train_counts: ClassCounts,
    pub test_counts: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Sorted pool indices of the train and test items of fold `f`.
    pub fn indices(&self, pool: &Dataset, f: usize) -> (Vec<usize>, Vec<usize>) {
        let index: HashMap<&str, usize> = pool
            .items
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.as_str(), i))
            .collect();
        let pick = |ids: &[String]| {
            let mut idx: Vec<usize> = ids.iter().map(|id| index[id.as_str()]).collect();
            idx.sort_unstable();
            idx
        };
        let fold = &self.folds[f];
        (pick(&fold.train), pick(&fold.test))
    }

    /// Train and test datasets for fold `f`, items in pool order.
    pub fn materialize(&self, pool: &Dataset, f: usize) -> (Dataset, Dataset) {
        let (train, test) = self.indices(pool, f);
        (pool.subset(&train), pool.subset(&test))
    }

    /// `fold_index<TAB>role<TAB>item_id` lines, train rows before test rows
    /// within each fold.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (f, fold) in self.folds.iter().enumerate() {
            for (role, ids) in [("train", &fold.train), ("test", &fold.test)] {
                for id in ids {
                    out.push_str(&format!("{f}\t{role}\t{id}\n"));
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(io_err(path))
    }
}

/// Parses a fold plan file, resolving ids and class counts against `pool`.
pub fn parse_fold_plan(content: &str, pool: &Dataset) -> Result<FoldPlan> {
    let labels: HashMap<&str, Option<Label>> =
        pool.items.iter().map(|t| (t.id.as_str(), t.label)).collect();
    let mut folds: Vec<Fold> = Vec::new();
    for (n, raw) in content.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(CorpusError::ColumnCount {
                line: line_no,
                expected: 3,
                found: cols.len(),
            });
        }
        let f: usize = cols[0].parse().map_err(|_| CorpusError::InvalidRecord {
            line: line_no,
            message: format!("bad fold index {:?}", cols[0]),
        })?;
        if f > folds.len() {
            return Err(CorpusError::InvalidRecord {
                line: line_no,
                message: format!("fold {f} appears before fold {}", folds.len()),
            });
        }
        if f == folds.len() {
            folds.push(Fold {
                train: Vec::new(),
                test: Vec::new(),
                train_counts: ClassCounts::default(),
                test_counts: ClassCounts::default(),
            });
        }
        let label = match labels.get(cols[2]) {
            Some(Some(l)) => *l,
            Some(None) => return Err(CorpusError::Unlabeled(cols[2].to_string())),
            None => return Err(CorpusError::UnknownItem(cols[2].to_string())),
        };
        let fold = &mut folds[f];
        let (ids, counts) = match cols[1] {
            "train" => (&mut fold.train, &mut fold.train_counts),
            "test" => (&mut fold.test, &mut fold.test_counts),
            other => {
                return Err(CorpusError::InvalidRecord {
                    line: line_no,
                    message: format!("unknown role {other:?}"),
                })
            }
        };
        ids.push(cols[2].to_string());
        match label {
            Label::Positive => counts.positive += 1,
            Label::Negative => counts.negative += 1,
        }
    }
    Ok(FoldPlan { folds })
}

pub fn load_fold_plan(path: &Path, pool: &Dataset) -> Result<FoldPlan> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    parse_fold_plan(&content, pool)
}

/// Builds `k` folds with pairwise-disjoint test blocks. Each class list is
/// shuffled once; test block `f` is the `f`-th run of `n_test` items at the
/// plan ratio, and fold `f` trains on the first items of the shuffled order
/// that are not in block `f`.
pub fn make_folds(pool: &Dataset, plan: &ScenarioPlan, k: usize) -> Result<FoldPlan> {
    if k == 0 {
        return Err(CorpusError::InvalidPlan("k must be at least 1".into()));
    }
    let classes = shuffled_classes(pool, plan.seed)?;
    let train_counts = plan.train_counts();
    let test_counts = plan.test_counts();
    for label in [Label::Positive, Label::Negative] {
        let available = classes[label.index()].len();
        let per_test = test_counts.get(label);
        require(label, k * per_test, available)?;
        require(label, per_test + train_counts.get(label), available)?;
    }

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut train_idx = Vec::with_capacity(plan.n_train);
        let mut test_idx = Vec::with_capacity(plan.n_test);
        for label in [Label::Positive, Label::Negative] {
            let order = &classes[label.index()];
            let per_test = test_counts.get(label);
            let block = f * per_test..(f + 1) * per_test;
            test_idx.extend_from_slice(&order[block.clone()]);
            train_idx.extend(
                order
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !block.contains(i))
                    .map(|(_, &idx)| idx)
                    .take(train_counts.get(label)),
            );
        }
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        let ids = |idx: &[usize]| idx.iter().map(|&i| pool.items[i].id.clone()).collect();
        folds.push(Fold {
            train: ids(&train_idx),
            test: ids(&test_idx),
            train_counts,
            test_counts,
        });
    }
    Ok(FoldPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(pos: usize, neg: usize) -> Dataset {
        let items = (0..pos + neg)
            .map(|i| {
                let label = Label::from_bool(i < pos);
                Tweet::new(format!("t{i}"), format!("text number {i}"), Some(label)).unwrap()
            })
            .collect();
        Dataset::new(items).unwrap()
    }

    #[test]
    fn parses_rows_and_maps_labels() {
        let d = parse_dataset("a\t1\tgetting high tonight\nb\t0\tnews about weed\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.items()[0].label, Some(Label::Positive));
        assert_eq!(d.items()[1].label, Some(Label::Negative));
        let u = parse_dataset("c\t-\tno label yet\n").unwrap();
        assert_eq!(u.items()[0].label, None);
        assert!(!u.all_labeled());
    }

    #[test]
    fn text_column_keeps_tabs() {
        let d = parse_dataset("a\t1\tleft\tright\n").unwrap();
        assert_eq!(d.items()[0].text, "left\tright");
    }

    #[test]
    fn bad_label_names_line() {
        let err = parse_dataset("a\t1\tok\nb\t2\tbad\n").unwrap_err();
        assert!(matches!(err, CorpusError::InvalidLabel { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn wrong_column_count_and_duplicates() {
        assert!(matches!(
            parse_dataset("a\t1\n").unwrap_err(),
            CorpusError::ColumnCount { line: 1, found: 2, .. }
        ));
        assert!(matches!(
            parse_dataset("a\t1\tx\na\t0\ty\n").unwrap_err(),
            CorpusError::DuplicateId { line: 2, .. }
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let d = parse_dataset("a\t1\tone\nb\t-\ttwo  spaces\nc\t0\tthree\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tsv");
        d.save(&path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);
    }

    #[test]
    fn majority_aggregation() {
        let mut ann = AnnotationSet::new();
        for (a, l) in [("w1", Label::Positive), ("w2", Label::Positive), ("w3", Label::Negative)] {
            ann.add("x", a, l);
        }
        for a in ["w1", "w2", "w3"] {
            ann.add("y", a, Label::Negative);
        }
        let labels = aggregate_labels(&ann).unwrap();
        assert_eq!(labels["x"], Label::Positive);
        assert_eq!(labels["y"], Label::Negative);
    }

    #[test]
    fn two_annotations_rejected() {
        let mut ann = AnnotationSet::new();
        ann.add("x", "w1", Label::Positive);
        ann.add("x", "w2", Label::Positive);
        for a in ["w1", "w2", "w3"] {
            ann.add("y", a, Label::Positive);
        }
        match aggregate_labels(&ann).unwrap_err() {
            CorpusError::Aggregation(report) => {
                assert_eq!(report.rejected, vec![("x".to_string(), 2)]);
                assert_eq!(report.labels.len(), 1);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_annotator_pair_refused() {
        let mut ann = AnnotationSet::new();
        assert!(ann.add("x", "w1", Label::Positive));
        assert!(!ann.add("x", "w1", Label::Negative));
        assert!(parse_annotations("x\tw1\t1\nx\tw1\t0\n").is_err());
    }

    #[test]
    fn dedupe_cases() {
        let d = parse_dataset("a\t1\tGet HIGH  now\nb\t0\tget high now\nc\t0\tother\n").unwrap();
        let (out, removed) = dedupe(&d);
        assert_eq!(removed, 1);
        assert_eq!(out.items().iter().map(|t| t.id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        let (same, removed) = dedupe(&out);
        assert_eq!((same, removed), (out, 0));
    }

    #[test]
    fn plan_validation() {
        assert!(ScenarioPlan::new(50, 40, 10, 10, 0).is_err());
        assert!(ScenarioPlan::new(10, 90, 15, 10, 0).is_err());
        assert!(ScenarioPlan::new(10, 90, 1900, 380, 0).is_ok());
    }

    #[test]
    fn table2_counts() {
        let rows = ScenarioPlan::table2(0);
        let got: Vec<_> = rows
            .iter()
            .map(|p| (p.ratio_name(), p.train_counts().positive, p.train_counts().negative, p.n_test))
            .collect();
        assert_eq!(
            got,
            vec![
                ("50:50".to_string(), 1725, 1725, 690),
                ("40:60".to_string(), 1140, 1710, 570),
                ("30:70".to_string(), 735, 1715, 490),
                ("20:80".to_string(), 430, 1720, 430),
                ("10:90".to_string(), 190, 1710, 380),
            ]
        );
    }

    #[test]
    fn scenario_counts_exact() {
        let p = pool(600, 2400);
        let plan = ScenarioPlan::new(20, 80, 2150, 430, 7).unwrap();
        let (train, test) = make_scenario(&p, &plan).unwrap();
        assert_eq!(ClassCounts::of(&train), ClassCounts { positive: 430, negative: 1720 });
        assert_eq!(ClassCounts::of(&test), ClassCounts { positive: 86, negative: 344 });
        let ids: HashSet<_> = train.items().iter().map(|t| &t.id).collect();
        assert!(test.items().iter().all(|t| !ids.contains(&t.id)));
    }

    #[test]
    fn scenario_shortfall() {
        let p = pool(100, 1000);
        let plan = ScenarioPlan::new(10, 90, 1500, 400, 0).unwrap();
        let err = make_scenario(&p, &plan).unwrap_err();
        match err {
            CorpusError::Shortfall { class, needed, available } => {
                assert_eq!(class, Label::Positive);
                assert_eq!((needed, available), (190, 100));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn scenario_is_deterministic() {
        let p = pool(300, 300);
        let plan = ScenarioPlan::new(50, 50, 400, 100, 11).unwrap();
        let a = make_scenario(&p, &plan).unwrap();
        let b = make_scenario(&p, &plan).unwrap();
        assert_eq!(a.0.to_tsv(), b.0.to_tsv());
        assert_eq!(a.1.to_tsv(), b.1.to_tsv());
        let c = make_scenario(&p, &plan.with_seed(12)).unwrap();
        assert_ne!(a.0.to_tsv(), c.0.to_tsv());
    }

    #[test]
    fn single_fold_matches_scenario() {
        let p = pool(200, 300);
        let plan = ScenarioPlan::new(40, 60, 200, 50, 3).unwrap();
        let folds = make_folds(&p, &plan, 1).unwrap();
        assert_eq!(folds.materialize(&p, 0), make_scenario(&p, &plan).unwrap());
    }

    #[test]
    fn six_folds_over_exact_pool() {
        // 4140 = 3450 + 690: every item is used, test blocks partition the pool.
        let p = pool(2070, 2070);
        let plan = ScenarioPlan::new(50, 50, 3450, 690, 1).unwrap();
        let folds = make_folds(&p, &plan, 6).unwrap();
        let mut all_test = HashSet::new();
        for f in 0..6 {
            let (train, test) = folds.materialize(&p, f);
            assert_eq!(test.len(), 690);
            assert_eq!(train.len(), 3450);
            for t in test.items() {
                assert!(all_test.insert(t.id.clone()));
            }
        }
        assert_eq!(all_test.len(), 4140);
    }

    #[test]
    fn fold_plan_file_round_trip() {
        let p = pool(60, 90);
        let plan = ScenarioPlan::new(40, 60, 50, 20, 5).unwrap();
        let folds = make_folds(&p, &plan, 3).unwrap();
        let parsed = parse_fold_plan(&folds.to_text(), &p).unwrap();
        assert_eq!(parsed, folds);
        assert!(matches!(
            parse_fold_plan("0\ttrain\tnope\n", &p).unwrap_err(),
            CorpusError::UnknownItem(_)
        ));
    }

    #[test]
    fn insufficient_for_k_blocks() {
        let p = pool(50, 50);
        let plan = ScenarioPlan::new(50, 50, 40, 20, 0).unwrap();
        assert!(make_folds(&p, &plan, 5).is_ok());
        assert!(matches!(make_folds(&p, &plan, 6).unwrap_err(), CorpusError::Shortfall { .. }));
    }
}
