//! Seeded template generator for a synthetic labeled corpus plus the
//! resource files (lexicons, clusters, synonyms, word vectors) it needs.
//!
//! Positive texts describe the writer taking a drug. Negatives reuse the
//! same vocabulary in other roles: news about drugs, first-person refusals,
//! first-person use verbs with ordinary objects, third-person reports and
//! unrelated chatter.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Label, Tweet};
use crate::embeddings::{EmbeddingTable, parse_embeddings};
use crate::features::{ClusterMap, FeatureTables, Lexicon, SynonymMap, DEFAULT_MAX_SYNONYMS, SLANG_MIN_EXCLUSIVE};

const FIRST_PERSON: &[&str] = &["i", "we", "me and the homies", "my friends and i", "i just", "we just", "lowkey i", "finally i"];
const THIRD_PERSON: &[&str] = &["my cousin", "this guy", "my roommate", "some kid", "he", "she", "they", "my neighbor"];
const USE_VERBS: &[&str] = &["smoked", "popped", "took", "snorted", "rolled", "hit", "dabbed", "sipped"];
const DRUGS: &[&str] = &["weed", "xanax", "percs", "oxy", "molly", "coke", "lean", "adderall", "blunt", "bars", "pills", "kush"];
const CONTEXT: &[&str] = &["last night", "before class", "all weekend", "again today", "at the party", "rn", "every day", "after work", "with the crew", "tonight"];
const STATES: &[&str] = &["so high", "feeling faded", "zooted", "geeked", "blazed af", "cant feel my face", "vibing", "gone"];
const TAILS: &[&str] = &["#420", "#turnup", "#highlife", "lol", "haha", "@user", "http://t.co/x1", "", "", ""];

const NEWS_SUBJECTS: &[&str] = &["police", "officials", "the cdc", "a new study", "the senate", "doctors", "reporters", "the county"];
const NEWS_VERBS: &[&str] = &["seized", "warn about", "link", "ban", "debate", "report a rise in", "investigate", "track"];
const NEWS_TAILS: &[&str] = &["overdoses", "in texas", "across the us", "this year", "crisis", "deaths", "http://t.co/n3", "arrests"];
const REFUSALS: &[&str] = &["never", "would never", "hate", "dont do", "quit", "stopped", "refuse to", "am done with"];
const REFUSAL_TAILS: &[&str] = &["not worth it", "stay safe", "pray for my friends", "so proud", "never again", "clean 90 days"];
const OBJECTS: &[&str] = &["salmon", "my dog to the park", "the gym", "a nap", "the bus", "notes", "a selfie", "the ball", "some tea", "the exam"];
const CHATTER: &[&str] = &["cant wait for the game", "this traffic is insane", "new album dropped", "who else is tired", "pizza for dinner", "rain all day", "love this song", "monday again"];
const REACTIONS: &[&str] = &["smh", "wow", "crazy", "sad", "lol", "", ""];

/// Synonyms appended by expansion; also in the word-vector vocabulary.
const SYNONYMS: &[(&str, &[&str])] = &[
    ("weed", &["kush", "marijuana"]),
    ("xanax", &["bars", "alprazolam"]),
    ("percs", &["percocet", "oxycodone"]),
    ("oxy", &["oxycodone"]),
    ("molly", &["mdma", "ecstasy"]),
    ("coke", &["cocaine"]),
    ("lean", &["codeine", "syrup"]),
];

const SLANG: &[&str] = &["zooted", "geeked", "blazed", "faded", "turnup", "highlife", "lowkey", "homies"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub positives: usize,
    pub negatives: usize,
    pub seed: u64,
    /// Word-vector dimension of the generated embedding table.
    pub embed_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            positives: 3000,
            negatives: 3000,
            seed: 7,
            embed_dim: 32,
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().unwrap_or("")
}

fn join(parts: &[&str]) -> String {
    parts.iter().filter(|p| !p.is_empty()).copied().collect::<Vec<_>>().join(" ")
}

fn positive(rng: &mut ChaCha8Rng) -> String {
    let subject = pick(rng, FIRST_PERSON);
    let verb = pick(rng, USE_VERBS);
    let drug = pick(rng, DRUGS);
    let ctx = pick(rng, CONTEXT);
    let state = if rng.random_bool(0.6) { pick(rng, STATES) } else { "" };
    let tail = pick(rng, TAILS);
    match rng.random_range(0..3) {
        0 => join(&[subject, verb, drug, ctx, state, tail]),
        1 => join(&[state, subject, verb, drug, ctx, tail]),
        _ => join(&[ctx, subject, verb, "some", drug, state, tail]),
    }
}

fn negative(rng: &mut ChaCha8Rng) -> String {
    let r: f64 = rng.random();
    let tail = pick(rng, REACTIONS);
    if r < 0.30 {
        join(&[pick(rng, NEWS_SUBJECTS), pick(rng, NEWS_VERBS), pick(rng, DRUGS), pick(rng, NEWS_TAILS)])
    } else if r < 0.55 {
        let verb = if rng.random_bool(0.5) { pick(rng, USE_VERBS) } else { "" };
        join(&[pick(rng, FIRST_PERSON), pick(rng, REFUSALS), verb, pick(rng, DRUGS), pick(rng, REFUSAL_TAILS)])
    } else if r < 0.75 {
        join(&[pick(rng, FIRST_PERSON), pick(rng, USE_VERBS), pick(rng, OBJECTS), pick(rng, CONTEXT), tail])
    } else if r < 0.88 {
        join(&[pick(rng, THIRD_PERSON), pick(rng, USE_VERBS), pick(rng, DRUGS), pick(rng, CONTEXT), tail])
    } else {
        join(&[pick(rng, CHATTER), pick(rng, CONTEXT), tail])
    }
}

/// Labeled pool: positives first (ids `p000000`…), then negatives.
pub fn generate_dataset(cfg: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut items = Vec::with_capacity(cfg.positives + cfg.negatives);
    for i in 0..cfg.positives {
        let text = positive(&mut rng);
        items.push(Tweet::new(format!("p{i:06}"), text, Some(Label::Positive)).expect("generated tweet"));
    }
    for i in 0..cfg.negatives {
        let text = negative(&mut rng);
        items.push(Tweet::new(format!("n{i:06}"), text, Some(Label::Negative)).expect("generated tweet"));
    }
    Dataset::new(items).expect("unique ids")
}

fn words(groups: &[&[&str]]) -> Vec<String> {
    let mut out: Vec<String> = groups
        .iter()
        .flat_map(|g| g.iter())
        .flat_map(|p| p.split_whitespace())
        .filter(|w| w.chars().all(|c| c.is_ascii_alphanumeric()))
        .map(str::to_string)
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Semantic groups, each mapped to one word cluster and one embedding
/// centroid.
fn groups() -> Vec<Vec<String>> {
    let syns: Vec<&str> = SYNONYMS.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    vec![
        words(&[DRUGS, &syns]),
        words(&[USE_VERBS]),
        words(&[FIRST_PERSON]),
        words(&[THIRD_PERSON]),
        words(&[STATES, SLANG]),
        words(&[NEWS_SUBJECTS, NEWS_VERBS, NEWS_TAILS]),
        words(&[REFUSALS, REFUSAL_TAILS]),
        words(&[OBJECTS]),
        words(&[CHATTER, CONTEXT, REACTIONS]),
    ]
}

pub fn abuse_lexicon_text() -> String {
    let mut s = String::from("# drug and use terms\n");
    for w in words(&[DRUGS, USE_VERBS]) {
        s.push_str(&w);
        s.push('\n');
    }
    s
}

pub fn slang_lexicon_text() -> String {
    let mut s = String::new();
    for w in SLANG {
        s.push_str(w);
        s.push('\n');
    }
    s
}

pub fn clusters_text() -> String {
    let mut s = String::new();
    let mut seen = std::collections::HashSet::new();
    for (c, g) in groups().iter().enumerate() {
        for w in g {
            if seen.insert(w.clone()) {
                s.push_str(&format!("{w}\t{}\n", c * 7));
            }
        }
    }
    s
}

pub fn synonyms_text() -> String {
    SYNONYMS
        .iter()
        .map(|(t, s)| format!("{t}\t{}\n", s.join(",")))
        .collect()
}

/// Word vectors: group centroid plus per-word noise, seeded.
pub fn embeddings_text(dim: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE3B);
    let mut seen = std::collections::HashSet::new();
    let mut lines = Vec::new();
    for g in groups() {
        let centroid: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        for w in g {
            if !seen.insert(w.clone()) {
                continue;
            }
            let v: Vec<String> = centroid
                .iter()
                .map(|c| format!("{:.5}", c + rng.random_range(-0.3..0.3)))
                .collect();
            lines.push(format!("{w} {}", v.join(" ")));
        }
    }
    format!("{} {dim}\n{}\n", lines.len(), lines.join("\n"))
}

/// Feature tables built from the generated resource texts.
pub fn feature_tables() -> FeatureTables {
    FeatureTables {
        abuse: Lexicon::parse(&abuse_lexicon_text(), 0),
        slang: Lexicon::parse(&slang_lexicon_text(), SLANG_MIN_EXCLUSIVE),
        clusters: ClusterMap::parse(&clusters_text()).expect("generated clusters"),
        synonyms: SynonymMap::parse(&synonyms_text()).expect("generated synonyms"),
        max_synonyms: DEFAULT_MAX_SYNONYMS,
    }
}

pub fn embedding_table(dim: usize, seed: u64) -> EmbeddingTable {
    parse_embeddings(&embeddings_text(dim, seed), dim).expect("generated embeddings")
}

/// Paths of a written bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub dataset: PathBuf,
    pub abuse: PathBuf,
    pub slang: PathBuf,
    pub clusters: PathBuf,
    pub synonyms: PathBuf,
    pub embeddings: PathBuf,
}

/// Writes the dataset and every resource file into `dir`.
pub fn write_bundle(cfg: &SynthConfig, dir: &Path) -> io::Result<SynthBundle> {
    fs::create_dir_all(dir)?;
    let b = SynthBundle {
        dataset: dir.join("dataset.tsv"),
        abuse: dir.join("abuse.txt"),
        slang: dir.join("slang.txt"),
        clusters: dir.join("clusters.tsv"),
        synonyms: dir.join("synonyms.tsv"),
        embeddings: dir.join("embeddings.txt"),
    };
    fs::write(&b.dataset, generate_dataset(cfg).to_tsv())?;
    fs::write(&b.abuse, abuse_lexicon_text())?;
    fs::write(&b.slang, slang_lexicon_text())?;
    fs::write(&b.clusters, clusters_text())?;
    fs::write(&b.synonyms, synonyms_text())?;
    fs::write(&b.embeddings, embeddings_text(cfg.embed_dim, cfg.seed))?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let cfg = SynthConfig {
            positives: 50,
            negatives: 50,
            ..SynthConfig::default()
        };
        assert_eq!(generate_dataset(&cfg), generate_dataset(&cfg));
        let other = generate_dataset(&SynthConfig { seed: 8, ..cfg.clone() });
        assert_ne!(generate_dataset(&cfg), other);
        assert_eq!(generate_dataset(&cfg).count(Label::Positive), 50);
    }

    #[test]
    fn resources_parse() {
        let t = feature_tables();
        assert!(t.abuse.contains("weed"));
        assert!(t.slang.contains("zooted"));
        assert!(!t.slang.contains("faded"));
        assert_eq!(t.clusters.cluster_of("weed"), Some(0));
        let e = embedding_table(8, 1);
        assert_eq!(e.dim(), 8);
        assert!(e.get("marijuana").is_some());
    }
}
