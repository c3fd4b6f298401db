//! Scenario × fold × member orchestration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig, ScenarioSpec};
use super::report::{to_csv, to_markdown, ReportRow, ScenarioResult, ENSEMBLE_CNN, ENSEMBLE_ML};
use crate::baselines::Baseline;
use crate::corpus::{load_dataset, make_folds, Dataset, FoldPlan};
use crate::embeddings::{load_embeddings, sniff_dim, EmbeddingTable};
use crate::ensemble::{combine, MemberKind, CNN_FAMILY, ML_FAMILY};
use crate::eval::{compute_metrics, MetricsReport};
use crate::features::{ClusterMap, FeatureTables, Lexicon, SynonymMap};
use crate::models::{select_best_epoch, train, EncodedSet, Encoder, Network, Prediction};
use crate::nn::{save_checkpoint, ModelCheckpoint, Precision, Scalar};
use crate::parallel::Executor;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{} unit(s) failed; partial results kept (first: {})", failures.len(), failures[0])]
    Failed {
        failures: Vec<String>,
        report: Box<ExperimentReport>,
    },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub exec: Executor,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    /// SHA-256 of the canonical config dump.
    pub config_digest: String,
    pub seed: u64,
    /// `(scenario, fold-plan seed)` pairs.
    pub scenario_seeds: Vec<(String, u64)>,
    pub precision: Precision,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl Provenance {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config_sha256 = {}", self.config_digest);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "precision = {}", precision_name(self.precision));
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        for (name, seed) in &self.scenario_seeds {
            let _ = writeln!(s, "scenario {name} fold_seed = {seed}");
        }
        s.push_str("member seeds: derive_seed(fold_seed, fold, roster position, member index)\n");
        let _ = writeln!(s, "started_unix = {}", self.started_unix);
        let _ = writeln!(s, "finished_unix = {}", self.finished_unix);
        s
    }
}

fn precision_name(p: Precision) -> &'static str {
    match p {
        Precision::F32 => "32",
        Precision::F64 => "64",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenarios: Vec<ScenarioResult>,
    pub provenance: Provenance,
}

/// SplitMix64 finalizer chained over `parts`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// `"50:50"` → `"50-50"`, usable as a directory name.
pub fn scenario_dir(spec: &ScenarioSpec) -> String {
    spec.ratio_name().replace(':', "-")
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write(path: &Path, content: &str) -> Result<(), ExperimentError> {
    fs::write(path, content).map_err(io_err(path))
}

/// Lexicons, cluster and synonym maps named by the config; missing entries
/// are empty.
pub fn load_tables(cfg: &ExperimentConfig) -> Result<FeatureTables, ExperimentError> {
    let input = |e: crate::features::FeatureError| ExperimentError::Input(e.to_string());
    let mut t = FeatureTables {
        max_synonyms: cfg.max_synonyms,
        ..FeatureTables::default()
    };
    if let Some(p) = &cfg.abuse_lexicon {
        t.abuse = Lexicon::load_abuse(p).map_err(input)?;
    }
    if let Some(p) = &cfg.slang_lexicon {
        t.slang = Lexicon::load_slang(p).map_err(input)?;
    }
    if let Some(p) = &cfg.clusters {
        t.clusters = ClusterMap::load(p).map_err(input)?;
    }
    if let Some(p) = &cfg.synonyms {
        t.synonyms = SynonymMap::load(p).map_err(input)?;
    }
    Ok(t)
}

pub fn load_embedding_file(path: &Path) -> Result<EmbeddingTable, ExperimentError> {
    let input = |e: crate::embeddings::EmbeddingError| ExperimentError::Input(e.to_string());
    let dim = sniff_dim(path).map_err(input)?;
    load_embeddings(path, dim).map_err(input)
}

/// Runs every scenario and writes artifacts under `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport, ExperimentError> {
    match opts.precision {
        Precision::F32 => run_typed::<f32>(cfg, opts),
        Precision::F64 => run_typed::<f64>(cfg, opts),
    }
}

struct Inputs {
    pool: Dataset,
    tables: FeatureTables,
    encoded: Option<EncodedSet>,
    cfg: ExperimentConfig,
}

/// One trained member's test predictions.
type UnitOutput = Result<(Vec<Prediction>, ModelCheckpoint), String>;

fn run_typed<T: Scalar>(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport, ExperimentError> {
    let started_unix = unix_now();
    cfg.validate()?;
    let mut cfg = cfg.clone();
    let pool = load_dataset(&cfg.dataset).map_err(|e| ExperimentError::Input(e.to_string()))?;
    let tables = load_tables(&cfg)?;
    let has_cnn = cfg.roster.iter().any(|k| k.is_cnn());
    let embeddings = match &cfg.embeddings {
        Some(p) if has_cnn => Some(load_embedding_file(p)?),
        _ => None,
    };
    if let Some(e) = &embeddings {
        cfg.arch.word.embed_dim = e.dim();
    }
    let encoded = has_cnn.then(|| Encoder::new(&tables, embeddings.as_ref()).encode(&pool));

    let out = cfg.output.clone();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let dump = cfg.dump();
    write(&out.join("config.txt"), &dump)?;
    let config_digest = Sha256::digest(dump.as_bytes())
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });

    let inputs = Inputs {
        pool,
        tables,
        encoded,
        cfg,
    };
    let mut failures = Vec::new();
    let mut manifest = String::new();
    let mut scenarios = Vec::new();
    let mut scenario_seeds = Vec::new();
    for (si, spec) in inputs.cfg.scenarios.iter().enumerate() {
        let seed = derive_seed(inputs.cfg.seed, &[si as u64]);
        scenario_seeds.push((spec.ratio_name(), seed));
        match run_scenario::<T>(&inputs, spec, seed, opts.exec, &mut manifest, &mut failures) {
            Ok(r) => scenarios.push(r),
            Err(e) => {
                let msg = format!("scenario {}: {e}", spec.ratio_name());
                let _ = writeln!(manifest, "failed\t{}\t-\t-\t{e}", spec.ratio_name());
                failures.push(msg);
            }
        }
    }

    let report = ExperimentReport {
        scenarios,
        provenance: Provenance {
            config_digest,
            seed: inputs.cfg.seed,
            scenario_seeds,
            precision: opts.precision,
            started_unix,
            finished_unix: unix_now(),
        },
    };
    write(&out.join("manifest.txt"), &manifest)?;
    write(&out.join("provenance.txt"), &report.provenance.to_text())?;
    write(&out.join("report.csv"), &to_csv(&report.scenarios))?;
    write(&out.join("report.md"), &to_markdown(&report.scenarios))?;
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(ExperimentError::Failed {
            failures,
            report: Box::new(report),
        })
    }
}

struct Unit {
    fold: usize,
    kind: MemberKind,
    member: usize,
    seed: u64,
}

fn run_scenario<T: Scalar>(
    inputs: &Inputs,
    spec: &ScenarioSpec,
    seed: u64,
    exec: Executor,
    manifest: &mut String,
    failures: &mut Vec<String>,
) -> Result<ScenarioResult, ExperimentError> {
    let cfg = &inputs.cfg;
    let plan = spec.plan(seed).map_err(ExperimentError::Input)?;
    let folds = make_folds(&inputs.pool, &plan, cfg.folds).map_err(|e| ExperimentError::Input(e.to_string()))?;
    let dir = cfg.output.join(scenario_dir(spec));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write(&dir.join("folds.txt"), &folds.to_text())?;

    let mut units = Vec::new();
    for f in 0..folds.k() {
        for (ki, &kind) in cfg.roster.iter().enumerate() {
            for j in 0..cfg.members_per_type {
                units.push(Unit {
                    fold: f,
                    kind,
                    member: j,
                    seed: derive_seed(seed, &[f as u64, ki as u64, j as u64]),
                });
            }
        }
    }
    let split: Vec<(Vec<usize>, Vec<usize>)> = (0..folds.k()).map(|f| folds.indices(&inputs.pool, f)).collect();
    let outputs: Vec<UnitOutput> = exec.map_range(units.len(), |u| run_unit::<T>(inputs, &folds, &split, &units[u], exec));

    let name = spec.ratio_name();
    let mut preds: Vec<Vec<Vec<Option<Vec<Prediction>>>>> =
        vec![vec![vec![None; cfg.members_per_type]; cfg.roster.len()]; folds.k()];
    for (unit, out) in units.iter().zip(outputs) {
        let id = format!("{}_{}", unit.kind, unit.member);
        match out {
            Ok((p, cp)) => {
                if cfg.save_checkpoints {
                    let fold_dir = dir.join(format!("fold{}", unit.fold));
                    fs::create_dir_all(&fold_dir).map_err(io_err(&fold_dir))?;
                    let path = fold_dir.join(format!("{id}.ckpt"));
                    save_checkpoint(&cp, &path).map_err(|e| ExperimentError::Io {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                }
                let _ = writeln!(manifest, "ok\t{name}\tfold{}\t{id}", unit.fold);
                let ki = cfg.roster.iter().position(|k| *k == unit.kind).expect("roster kind");
                preds[unit.fold][ki][unit.member] = Some(p);
            }
            Err(e) => {
                let _ = writeln!(manifest, "failed\t{name}\tfold{}\t{id}\t{e}", unit.fold);
                failures.push(format!("{name} fold {} {id}: {e}", unit.fold));
            }
        }
    }

    let mut per_fold_rows: Vec<(usize, String, MetricsReport)> = Vec::new();
    let mut member_rows: Vec<(String, Vec<MetricsReport>)> = Vec::new();
    let mut type_rows: Vec<(String, Vec<MetricsReport>)> = Vec::new();
    let mut ens_rows: Vec<(String, Vec<MetricsReport>)> = Vec::new();
    let metrics = |p: &[Prediction], gold: &[crate::corpus::Label]| {
        let labels: Vec<_> = p.iter().map(|x| x.label).collect();
        compute_metrics(&labels, gold).expect("aligned predictions")
    };
    let golds: Vec<Vec<crate::corpus::Label>> = split
        .iter()
        .map(|(_, test)| test.iter().map(|&i| inputs.pool.items()[i].label.expect("labeled pool")).collect())
        .collect();

    for (ki, kind) in cfg.roster.iter().enumerate() {
        for j in 0..cfg.members_per_type {
            let id = format!("{kind}_{j}");
            let mut reps = Vec::new();
            for f in 0..folds.k() {
                if let Some(p) = &preds[f][ki][j] {
                    let m = metrics(p, &golds[f]);
                    per_fold_rows.push((f, id.clone(), m));
                    reps.push(m);
                }
            }
            member_rows.push((id, reps));
        }
        let mut reps = Vec::new();
        for f in 0..folds.k() {
            let ms: Option<Vec<MetricsReport>> =
                preds[f][ki].iter().map(|p| p.as_ref().map(|p| metrics(p, &golds[f]))).collect();
            if let Some(m) = ms.and_then(|ms| MetricsReport::mean(&ms)) {
                per_fold_rows.push((f, kind.to_string(), m));
                reps.push(m);
            }
        }
        type_rows.push((kind.to_string(), reps));
    }

    let families: [(&str, Vec<MemberKind>); 2] = [
        (ENSEMBLE_CNN, CNN_FAMILY.iter().map(|&k| MemberKind::Cnn(k)).collect()),
        (ENSEMBLE_ML, ML_FAMILY.iter().map(|&k| MemberKind::Baseline(k)).collect()),
    ];
    for (ens, family) in families {
        let idx: Option<Vec<usize>> = family.iter().map(|k| cfg.roster.iter().position(|r| r == k)).collect();
        let Some(idx) = idx else { continue };
        let mut reps = Vec::new();
        for f in 0..folds.k() {
            let members: Option<Vec<Vec<Prediction>>> =
                idx.iter().flat_map(|&ki| preds[f][ki].iter().cloned()).collect();
            let Some(members) = members else { continue };
            let votes = combine(&members).map_err(|e| ExperimentError::Input(e.to_string()))?;
            let labels: Vec<_> = votes.iter().map(|v| v.label).collect();
            let m = compute_metrics(&labels, &golds[f]).expect("aligned votes");
            per_fold_rows.push((f, ens.to_string(), m));
            reps.push(m);
        }
        ens_rows.push((ens.to_string(), reps));
    }

    let mut csv = String::from("fold,model,accuracy,precision_p,recall_p,f1_p,TP,FP,FN,TN\n");
    per_fold_rows.sort_by_key(|(f, _, _)| *f);
    for (f, model, m) in &per_fold_rows {
        csv.push_str(&super::report::csv_row(&f.to_string(), model, m));
        csv.push('\n');
    }
    write(&dir.join("metrics.csv"), &csv)?;

    let to_rows = |v: Vec<(String, Vec<MetricsReport>)>| -> Vec<ReportRow> {
        v.into_iter()
            .filter_map(|(model, per_fold)| {
                MetricsReport::mean(&per_fold).map(|metrics| ReportRow {
                    model,
                    metrics,
                    per_fold,
                })
            })
            .collect()
    };
    let mut rows = to_rows(ens_rows);
    rows.extend(to_rows(type_rows));
    rows.sort_by_key(|r| super::report::MODEL_ORDER.iter().position(|m| *m == r.model));
    Ok(ScenarioResult {
        scenario: name,
        rows,
        members: to_rows(member_rows),
    })
}

fn run_unit<T: Scalar>(
    inputs: &Inputs,
    folds: &FoldPlan,
    split: &[(Vec<usize>, Vec<usize>)],
    unit: &Unit,
    exec: Executor,
) -> UnitOutput {
    let cfg = &inputs.cfg;
    let (train_idx, test_idx) = &split[unit.fold];
    debug_assert_eq!(folds.folds[unit.fold].test.len(), test_idx.len());
    match unit.kind {
        MemberKind::Cnn(kind) => {
            let enc = inputs.encoded.as_ref().ok_or("no encoded inputs")?;
            let train_set = enc.select(train_idx);
            let test_set = enc.select(test_idx);
            let mut net = Network::<T>::build(kind, &cfg.arch, unit.seed).map_err(|e| e.to_string())?;
            let tc = crate::models::TrainConfig {
                seed: derive_seed(unit.seed, &[1]),
                ..cfg.train.clone()
            };
            let cps = train(&mut net, &train_set, &tc).map_err(|e| e.to_string())?;
            let best = select_best_epoch(&cps, tc.selection_metric.key()).map_err(|e| e.to_string())?;
            let net = Network::<T>::from_checkpoint(best).map_err(|e| e.to_string())?;
            let p = net.predict_set(&test_set, exec).map_err(|e| e.to_string())?;
            Ok((p, best.clone()))
        }
        MemberKind::Baseline(kind) => {
            let train = inputs.pool.subset(train_idx);
            let test = inputs.pool.subset(test_idx);
            let b = Baseline::train(kind, &train, &inputs.tables, &cfg.baselines, unit.seed, exec)
                .map_err(|e| e.to_string())?;
            let texts: Vec<&str> = test.texts().collect();
            Ok((b.predict_texts(&texts, &inputs.tables, exec), b.to_checkpoint()))
        }
    }
}
