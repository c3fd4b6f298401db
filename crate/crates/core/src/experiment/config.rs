//! `key = value` experiment configuration with `[section]` headers and `#`
//! comments.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::baselines::BaselineConfig;
use crate::corpus::ScenarioPlan;
use crate::ensemble::MemberKind;
use crate::features::DEFAULT_MAX_SYNONYMS;
use crate::models::{CnnArch, CnnKind, SelectionMetric, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("`{key}`: path {path} does not exist")]
    PathNotFound { key: &'static str, path: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// A class-ratio scenario, written `50:50@3450/690`. A bare ratio such as
/// `10:90` takes the default sizes for that ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub positive_pct: u32,
    pub n_train: usize,
    pub n_test: usize,
}

impl ScenarioSpec {
    pub fn table2() -> Vec<ScenarioSpec> {
        ScenarioPlan::table2(0)
            .into_iter()
            .map(|p| ScenarioSpec {
                positive_pct: p.positive_pct(),
                n_train: p.n_train,
                n_test: p.n_test,
            })
            .collect()
    }

    pub fn plan(&self, seed: u64) -> Result<ScenarioPlan, String> {
        ScenarioPlan::new(self.positive_pct, 100 - self.positive_pct, self.n_train, self.n_test, seed)
            .map_err(|e| e.to_string())
    }

    pub fn ratio_name(&self) -> String {
        format!("{}:{}", self.positive_pct, 100 - self.positive_pct)
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}/{}", self.ratio_name(), self.n_train, self.n_test)
    }
}

impl FromStr for ScenarioSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected POS:NEG[@TRAIN/TEST], got {s:?}");
        let (ratio, sizes) = match s.trim().split_once('@') {
            Some((r, sz)) => (r, Some(sz)),
            None => (s.trim(), None),
        };
        let (p, n) = ratio.split_once(':').ok_or_else(bad)?;
        let p: u32 = p.trim().parse().map_err(|_| bad())?;
        let n: u32 = n.trim().parse().map_err(|_| bad())?;
        if p + n != 100 {
            return Err(format!("ratio {p}:{n} does not sum to 100"));
        }
        let spec = match sizes {
            Some(sizes) => {
                let (tr, te) = sizes.split_once('/').ok_or_else(bad)?;
                ScenarioSpec {
                    positive_pct: p,
                    n_train: tr.trim().parse().map_err(|_| bad())?,
                    n_test: te.trim().parse().map_err(|_| bad())?,
                }
            }
            None => ScenarioSpec::table2()
                .into_iter()
                .find(|d| d.positive_pct == p)
                .ok_or_else(|| format!("no default sizes for {p}:{n}; write {p}:{n}@TRAIN/TEST"))?,
        };
        spec.plan(0)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub abuse_lexicon: Option<PathBuf>,
    pub slang_lexicon: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output: PathBuf,
    pub scenarios: Vec<ScenarioSpec>,
    pub folds: usize,
    /// Model types; each contributes `members_per_type` members.
    pub roster: Vec<MemberKind>,
    pub members_per_type: usize,
    pub seed: u64,
    pub save_checkpoints: bool,
    pub max_synonyms: usize,
    pub train: TrainConfig,
    pub arch: CnnArch,
    pub baselines: BaselineConfig,
}

impl ExperimentConfig {
    /// Defaults with the given dataset path.
    pub fn with_dataset(dataset: impl Into<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            dataset: dataset.into(),
            abuse_lexicon: None,
            slang_lexicon: None,
            clusters: None,
            synonyms: None,
            embeddings: None,
            output: PathBuf::from("ssc-output"),
            scenarios: ScenarioSpec::table2(),
            folds: 6,
            roster: MemberKind::ALL.to_vec(),
            members_per_type: 2,
            seed: 42,
            save_checkpoints: true,
            max_synonyms: DEFAULT_MAX_SYNONYMS,
            train: TrainConfig::default(),
            arch: CnnArch::default(),
            baselines: BaselineConfig::default(),
        }
    }

    /// Structural checks plus path existence.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_values()?;
        let paths: [(&'static str, Option<&PathBuf>); 6] = [
            ("dataset", Some(&self.dataset)),
            ("abuse_lexicon", self.abuse_lexicon.as_ref()),
            ("slang_lexicon", self.slang_lexicon.as_ref()),
            ("clusters", self.clusters.as_ref()),
            ("synonyms", self.synonyms.as_ref()),
            ("embeddings", self.embeddings.as_ref()),
        ];
        for (key, p) in paths {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::PathNotFound {
                        key,
                        path: p.display().to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn validate_values(&self) -> Result<(), ConfigError> {
        let inv = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.scenarios.is_empty() {
            return inv("no scenarios");
        }
        if self.folds == 0 {
            return inv("folds must be at least 1");
        }
        if self.roster.is_empty() || self.members_per_type == 0 {
            return inv("roster must name at least one model type with at least one member");
        }
        let mut sorted = self.roster.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.roster.len() {
            return inv("roster lists a model type twice");
        }
        if self.roster.contains(&MemberKind::Cnn(CnnKind::WordAux)) && self.embeddings.is_none() {
            return inv("word_aux needs an embeddings path");
        }
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.arch.word.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.arch.char.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.baselines.svm.lambda > 0.0) || self.baselines.svm.epochs == 0 || self.baselines.rf.trees == 0 {
            return inv("baseline settings must be positive");
        }
        Ok(())
    }

    /// Canonical text form; `parse_config(dump(c))` equals `c`.
    pub fn dump(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        s.push_str("[paths]\n");
        s.push_str(&format!("dataset = {}\n", self.dataset.display()));
        for (k, v) in [
            ("abuse_lexicon", opt(&self.abuse_lexicon)),
            ("slang_lexicon", opt(&self.slang_lexicon)),
            ("clusters", opt(&self.clusters)),
            ("synonyms", opt(&self.synonyms)),
            ("embeddings", opt(&self.embeddings)),
        ] {
            if let Some(v) = v {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s.push_str(&format!("output = {}\n", self.output.display()));
        s.push_str("\n[experiment]\n");
        let sc: Vec<String> = self.scenarios.iter().map(ToString::to_string).collect();
        s.push_str(&format!("scenarios = {}\n", sc.join(", ")));
        s.push_str(&format!("folds = {}\n", self.folds));
        let r: Vec<&str> = self.roster.iter().map(|k| k.name()).collect();
        s.push_str(&format!("roster = {}\n", r.join(", ")));
        s.push_str(&format!("members_per_type = {}\n", self.members_per_type));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("save_checkpoints = {}\n", self.save_checkpoints));
        s.push_str(&format!("max_synonyms = {}\n", self.max_synonyms));
        let t = &self.train;
        s.push_str("\n[train]\n");
        s.push_str(&format!("epochs = {}\n", t.epochs));
        s.push_str(&format!("batch_size = {}\n", t.batch_size));
        s.push_str(&format!("validation_fraction = {}\n", t.validation_fraction));
        s.push_str(&format!("selection_metric = {}\n", t.selection_metric.key()));
        s.push_str(&format!("learning_rate = {}\n", t.adam.lr));
        let (w, c) = (&self.arch.word, &self.arch.char);
        s.push_str("\n[cnn]\n");
        s.push_str(&format!("word_kernel_sizes = {}\n", list(&w.kernel_sizes)));
        s.push_str(&format!("word_filters = {}\n", w.filters_per_size));
        s.push_str(&format!("pool_size = {}\n", w.pool_size));
        s.push_str(&format!("word_dropout = {}\n", w.dropout));
        s.push_str(&format!("char_kernel_sizes = {}\n", list(&c.kernel_sizes)));
        s.push_str(&format!("char_filters = {}\n", c.filters_per_size));
        s.push_str(&format!("char_dim = {}\n", c.char_dim));
        s.push_str(&format!("char_dropout = {}\n", c.dropout));
        let b = &self.baselines;
        s.push_str("\n[baselines]\n");
        s.push_str(&format!("svm_lambda = {}\n", b.svm.lambda));
        s.push_str(&format!("svm_epochs = {}\n", b.svm.epochs));
        s.push_str(&format!("rf_trees = {}\n", b.rf.trees));
        s.push_str(&format!(
            "rf_max_depth = {}\n",
            b.rf.max_depth.map_or("none".to_string(), |d| d.to_string())
        ));
        s.push_str(&format!("nb_bootstrap = {}\n", b.nb_bootstrap));
        s
    }
}

fn parse_value<V: FromStr>(line: usize, key: &str, v: &str) -> Result<V, ConfigError> {
    v.parse().map_err(|_| ConfigError::Value {
        line,
        key: key.to_string(),
        message: format!("cannot parse {v:?}"),
    })
}

fn parse_usize_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>, ConfigError> {
    v.split(',').map(|x| parse_value(line, key, x.trim())).collect()
}

/// Parses config text. Relative paths are resolved against `base`. Does
/// not check that paths exist (see [`ExperimentConfig::validate`]).
pub fn parse_config(content: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::with_dataset(PathBuf::new());
    let mut have_dataset = false;
    let mut output_set = false;
    let mut roster_set = false;
    let mut section = String::new();
    for (n, raw) in content.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if !["paths", "experiment", "train", "cnn", "baselines"].contains(&name) {
                return Err(ConfigError::UnknownSection {
                    line: line_no,
                    name: name.to_string(),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: "expected key = value".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let path = || base.join(value);
        let val_err = |message: String| ConfigError::Value {
            line: line_no,
            key: key.to_string(),
            message,
        };
        match (section.as_str(), key) {
            ("paths", "dataset") => {
                cfg.dataset = path();
                have_dataset = true;
            }
            ("paths", "abuse_lexicon") => cfg.abuse_lexicon = Some(path()),
            ("paths", "slang_lexicon") => cfg.slang_lexicon = Some(path()),
            ("paths", "clusters") => cfg.clusters = Some(path()),
            ("paths", "synonyms") => cfg.synonyms = Some(path()),
            ("paths", "embeddings") => cfg.embeddings = Some(path()),
            ("paths", "output") => {
                cfg.output = path();
                output_set = true;
            }
            ("experiment", "scenarios") => {
                cfg.scenarios = value
                    .split(',')
                    .map(|s| s.parse::<ScenarioSpec>().map_err(&val_err))
                    .collect::<Result<_, _>>()?;
            }
            ("experiment", "folds") => cfg.folds = parse_value(line_no, key, value)?,
            ("experiment", "roster") => {
                roster_set = true;
                cfg.roster = value
                    .split(',')
                    .map(|s| s.trim().parse::<MemberKind>().map_err(&val_err))
                    .collect::<Result<_, _>>()?;
            }
            ("experiment", "members_per_type") => cfg.members_per_type = parse_value(line_no, key, value)?,
            ("experiment", "seed") => cfg.seed = parse_value(line_no, key, value)?,
            ("experiment", "save_checkpoints") => cfg.save_checkpoints = parse_value(line_no, key, value)?,
            ("experiment", "max_synonyms") => cfg.max_synonyms = parse_value(line_no, key, value)?,
            ("train", "epochs") => cfg.train.epochs = parse_value(line_no, key, value)?,
            ("train", "batch_size") => cfg.train.batch_size = parse_value(line_no, key, value)?,
            ("train", "validation_fraction") => cfg.train.validation_fraction = parse_value(line_no, key, value)?,
            ("train", "selection_metric") => {
                cfg.train.selection_metric = SelectionMetric::parse(value)
                    .ok_or_else(|| val_err("expected f1_p or accuracy".into()))?;
            }
            ("train", "learning_rate") => cfg.train.adam.lr = parse_value(line_no, key, value)?,
            ("cnn", "word_kernel_sizes") => cfg.arch.word.kernel_sizes = parse_usize_list(line_no, key, value)?,
            ("cnn", "word_filters") => cfg.arch.word.filters_per_size = parse_value(line_no, key, value)?,
            ("cnn", "pool_size") => cfg.arch.word.pool_size = parse_value(line_no, key, value)?,
            ("cnn", "word_dropout") => cfg.arch.word.dropout = parse_value(line_no, key, value)?,
            ("cnn", "char_kernel_sizes") => cfg.arch.char.kernel_sizes = parse_usize_list(line_no, key, value)?,
            ("cnn", "char_filters") => cfg.arch.char.filters_per_size = parse_value(line_no, key, value)?,
            ("cnn", "char_dim") => cfg.arch.char.char_dim = parse_value(line_no, key, value)?,
            ("cnn", "char_dropout") => cfg.arch.char.dropout = parse_value(line_no, key, value)?,
            ("baselines", "svm_lambda") => cfg.baselines.svm.lambda = parse_value(line_no, key, value)?,
            ("baselines", "svm_epochs") => cfg.baselines.svm.epochs = parse_value(line_no, key, value)?,
            ("baselines", "rf_trees") => cfg.baselines.rf.trees = parse_value(line_no, key, value)?,
            ("baselines", "rf_max_depth") => {
                cfg.baselines.rf.max_depth = if value == "none" {
                    None
                } else {
                    Some(parse_value(line_no, key, value)?)
                }
            }
            ("baselines", "nb_bootstrap") => cfg.baselines.nb_bootstrap = parse_value(line_no, key, value)?,
            ("", _) => {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: format!("key `{key}` outside any section"),
                })
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                })
            }
        }
    }
    if !have_dataset {
        return Err(ConfigError::Missing("dataset"));
    }
    if !output_set {
        cfg.output = base.join("ssc-output");
    }
    if !roster_set && cfg.embeddings.is_none() {
        // The word model cannot run without vectors.
        cfg.roster.retain(|k| *k != MemberKind::Cnn(CnnKind::WordAux));
    }
    cfg.validate_values()?;
    Ok(cfg)
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let cfg = parse_config(&text, base)?;
    cfg.validate()?;
    Ok(cfg)
}
