//! `ssc` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ssc_core::baselines::{prefilter, Baseline};
use ssc_core::corpus::{
    aggregate_labels, dedupe, load_annotations, load_dataset, make_folds, make_scenario, Dataset, Label, Tweet,
};
use ssc_core::embeddings::EmbeddingTable;
use ssc_core::ensemble::{ensemble_predict, EnsembleInput, EnsembleSpec, Member, MemberKind};
use ssc_core::eval::{cohen_kappa, compute_metrics, krippendorff_alpha, EvalError, MetricsReport};
use ssc_core::experiment::{
    derive_seed, load_config, load_embedding_file, load_tables, render, run_experiment, ExperimentConfig,
    ExperimentError, ReportFormat, ReportRow, RunOptions, ScenarioResult, ScenarioSpec,
};
use ssc_core::features::FeatureTables;
use ssc_core::models::{select_best_epoch, train_with, Encoder, Network, Prediction, TrainConfig};
use ssc_core::nn::{load_checkpoint, save_checkpoint, Precision, Scalar};
use ssc_core::parallel::{init_threads, Executor};
use ssc_core::synth::{write_bundle, SynthConfig};

#[derive(Parser)]
#[command(name = "ssc", version, about = "Drug-abuse tweet classification toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Experiment config (also supplies resource paths and hyperparameters
    /// to the model subcommands).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel units.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, default_value = "csv")]
    format: ReportFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset utilities.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train one model and write its checkpoints.
    Train {
        /// char_aux, char_cnn, word_aux, svm, random_forest or naive_bayes.
        #[arg(long)]
        kind: MemberKind,
        /// Labeled training data (defaults to the config dataset).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a checkpoint on labeled data.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Majority-vote ensemble from a spec of `kind path` lines.
    Ensemble {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Allow compositions other than the two six-member families.
        #[arg(long)]
        free: bool,
    },
    /// Run every scenario of the config and print the report.
    Experiment,
    /// Krippendorff's alpha over an annotation file; Cohen's kappa when two
    /// annotators are named.
    Agreement {
        annotations: PathBuf,
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        kappa: Option<Vec<String>>,
    },
    /// Select confidently classified unlabeled items with a calibrated SVM.
    Prefilter {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        #[arg(long)]
        sample: usize,
    },
    /// Label texts with a checkpoint.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Write a synthetic corpus, resource files and a matching config.
    Synth {
        #[arg(long, default_value_t = 3000)]
        positives: usize,
        #[arg(long, default_value_t = 3000)]
        negatives: usize,
        #[arg(long, default_value_t = 32)]
        embed_dim: usize,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Parse a dataset and print class counts.
    Validate { data: PathBuf },
    /// Drop duplicate texts (case and whitespace insensitive).
    Dedupe { data: PathBuf },
    /// Majority labels from an annotation file; with `--texts`, writes a
    /// labeled dataset.
    Aggregate {
        annotations: PathBuf,
        #[arg(long)]
        texts: Option<PathBuf>,
    },
    /// One train/test split at a class ratio, e.g. `10:90@1900/380`.
    Resample {
        data: PathBuf,
        #[arg(long)]
        scenario: ScenarioSpec,
    },
    /// A k-fold plan for a scenario.
    Folds {
        data: PathBuf,
        #[arg(long)]
        scenario: ScenarioSpec,
        #[arg(short, long, default_value_t = 6)]
        k: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    if let Some(j) = g.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        init_threads(j);
    }
    let exec = match g.jobs {
        Some(1) => Executor::Sequential,
        _ => Executor::default(),
    };
    let precision = Precision::from_env().map_err(|e| anyhow!(e))?;
    match cli.command {
        Command::Dataset(cmd) => dataset(cmd, &g),
        Command::Train { kind, data } => match precision {
            Precision::F32 => train_cmd::<f32>(&g, kind, data, exec),
            Precision::F64 => train_cmd::<f64>(&g, kind, data, exec),
        },
        Command::Evaluate { model, data } => {
            let ctx = Resources::load(&g)?;
            let d = load_dataset(&data)?;
            let gold = d.labels().context("evaluate needs labeled data")?;
            let preds = match precision {
                Precision::F32 => predict_with::<f32>(&ctx, &model, &d, exec)?,
                Precision::F64 => predict_with::<f64>(&ctx, &model, &d, exec)?,
            };
            let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
            let report = compute_metrics(&labels, &gold)?;
            let name = MemberKind::of_checkpoint(&load_checkpoint(&model)?).map_or("model".into(), |k| k.to_string());
            print!("{}", render(&[single(&data, &name, report)], g.format));
            Ok(())
        }
        Command::Ensemble { spec, data, free } => match precision {
            Precision::F32 => ensemble_cmd::<f32>(&g, &spec, &data, free, exec),
            Precision::F64 => ensemble_cmd::<f64>(&g, &spec, &data, free, exec),
        },
        Command::Experiment => {
            let path = g.config.as_ref().context("experiment needs --config")?;
            let mut cfg = load_config(path)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            if let Some(o) = &g.output {
                cfg.output = o.clone();
            }
            match run_experiment(&cfg, &RunOptions { exec, precision }) {
                Ok(r) => {
                    print!("{}", render(&r.scenarios, g.format));
                    Ok(())
                }
                Err(ExperimentError::Failed { failures, report }) => {
                    print!("{}", render(&report.scenarios, g.format));
                    for f in &failures {
                        eprintln!("failed: {f}");
                    }
                    bail!(
                        "{} unit(s) failed; see {}",
                        failures.len(),
                        cfg.output.join("manifest.txt").display()
                    )
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Agreement { annotations, kappa } => {
            let ann = load_annotations(&annotations)?;
            match krippendorff_alpha(&ann) {
                Ok(a) => println!("krippendorff_alpha\t{a:.6}"),
                Err(EvalError::NotComputable(why)) => println!("krippendorff_alpha\tnot computable ({why})"),
                Err(e) => return Err(e.into()),
            }
            if let Some(pair) = kappa {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for votes in ann.entries().values() {
                    let find = |who: &str| votes.iter().find(|(n, _)| n == who).map(|(_, l)| *l);
                    if let (Some(x), Some(y)) = (find(&pair[0]), find(&pair[1])) {
                        a.push(x);
                        b.push(y);
                    }
                }
                println!("cohen_kappa\t{:.6}\t({} shared items)", cohen_kappa(&a, &b)?, a.len());
            }
            Ok(())
        }
        Command::Prefilter {
            model,
            data,
            threshold,
            sample,
        } => {
            let ctx = Resources::load(&g)?;
            let b = Baseline::from_checkpoint(&load_checkpoint(&model)?)?;
            let d = load_dataset(&data)?;
            let seed = g.seed.unwrap_or(ctx.cfg.seed);
            let r = prefilter(&d, &b, &ctx.tables, threshold, sample, seed, exec)?;
            if r.short {
                eprintln!("only {} item(s) qualified; returning all of them", r.qualifying);
            }
            emit_dataset(&g, "prefiltered.tsv", &r.selected)
        }
        Command::Predict { model, data } => {
            let ctx = Resources::load(&g)?;
            let d = load_dataset(&data)?;
            let preds = match precision {
                Precision::F32 => predict_with::<f32>(&ctx, &model, &d, exec)?,
                Precision::F64 => predict_with::<f64>(&ctx, &model, &d, exec)?,
            };
            for (t, p) in d.items().iter().zip(&preds) {
                println!("{}\t{}\t{:.6}", t.id, p.label, p.positive_prob);
            }
            Ok(())
        }
        Command::Synth {
            positives,
            negatives,
            embed_dim,
        } => {
            let dir = g.output.clone().context("synth needs --output")?;
            let cfg = SynthConfig {
                positives,
                negatives,
                seed: g.seed.unwrap_or(SynthConfig::default().seed),
                embed_dim,
            };
            let b = write_bundle(&cfg, &dir)?;
            let conf = format!(
                "[paths]\ndataset = {}\nabuse_lexicon = {}\nslang_lexicon = {}\nclusters = {}\nsynonyms = {}\nembeddings = {}\noutput = results\n",
                file_name(&b.dataset),
                file_name(&b.abuse),
                file_name(&b.slang),
                file_name(&b.clusters),
                file_name(&b.synonyms),
                file_name(&b.embeddings),
            );
            fs::write(dir.join("experiment.conf"), conf)?;
            println!("wrote synthetic corpus and experiment.conf to {}", dir.display());
            Ok(())
        }
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

fn single(data: &Path, model: &str, m: MetricsReport) -> ScenarioResult {
    ScenarioResult {
        scenario: file_name(data),
        rows: vec![ReportRow {
            model: model.to_string(),
            metrics: m,
            per_fold: vec![m],
        }],
        members: Vec::new(),
    }
}

/// Writes to `--output/<default_name>` when given, otherwise to stdout.
fn emit_dataset(g: &Global, default_name: &str, d: &Dataset) -> Result<()> {
    match &g.output {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(default_name);
            d.save(&path)?;
            eprintln!("wrote {} item(s) to {}", d.len(), path.display());
        }
        None => print!("{}", d.to_tsv()),
    }
    Ok(())
}

fn dataset(cmd: DatasetCmd, g: &Global) -> Result<()> {
    let seed = g.seed.unwrap_or(42);
    match cmd {
        DatasetCmd::Validate { data } => {
            let d = load_dataset(&data)?;
            let unlabeled = d.items().iter().filter(|t| t.label.is_none()).count();
            println!(
                "{} items: {} positive, {} negative, {} unlabeled",
                d.len(),
                d.count(Label::Positive),
                d.count(Label::Negative),
                unlabeled
            );
            Ok(())
        }
        DatasetCmd::Dedupe { data } => {
            let (d, removed) = dedupe(&load_dataset(&data)?);
            eprintln!("removed {removed} duplicate(s)");
            emit_dataset(g, "deduped.tsv", &d)
        }
        DatasetCmd::Aggregate { annotations, texts } => {
            let labels = aggregate_labels(&load_annotations(&annotations)?)?;
            match texts {
                None => {
                    for (id, l) in &labels {
                        println!("{id}\t{l}");
                    }
                    Ok(())
                }
                Some(path) => {
                    let d = load_dataset(&path)?;
                    let items = d
                        .into_items()
                        .into_iter()
                        .map(|t| {
                            let label = labels.get(&t.id).copied().or(t.label);
                            Tweet::new(t.id, t.text, label)
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    emit_dataset(g, "aggregated.tsv", &Dataset::new(items)?)
                }
            }
        }
        DatasetCmd::Resample { data, scenario } => {
            let pool = load_dataset(&data)?;
            let plan = scenario.plan(seed).map_err(|e| anyhow!(e))?;
            let (train, test) = make_scenario(&pool, &plan)?;
            let dir = g.output.clone().context("resample needs --output")?;
            fs::create_dir_all(&dir)?;
            train.save(&dir.join("train.tsv"))?;
            test.save(&dir.join("test.tsv"))?;
            println!("train {} / test {} written to {}", train.len(), test.len(), dir.display());
            Ok(())
        }
        DatasetCmd::Folds { data, scenario, k } => {
            let pool = load_dataset(&data)?;
            let plan = scenario.plan(seed).map_err(|e| anyhow!(e))?;
            let folds = make_folds(&pool, &plan, k)?;
            match &g.output {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    folds.save(&dir.join("folds.txt"))?;
                }
                None => print!("{}", folds.to_text()),
            }
            Ok(())
        }
    }
}

/// Config-derived resources shared by the model subcommands.
struct Resources {
    cfg: ExperimentConfig,
    tables: FeatureTables,
    embeddings: Option<EmbeddingTable>,
}

impl Resources {
    fn load(g: &Global) -> Result<Resources> {
        let cfg = match &g.config {
            Some(p) => load_config(p)?,
            None => ExperimentConfig::with_dataset(PathBuf::new()),
        };
        let tables = load_tables(&cfg)?;
        let embeddings = cfg.embeddings.as_deref().map(load_embedding_file).transpose()?;
        Ok(Resources { cfg, tables, embeddings })
    }

    fn encoder(&self) -> Encoder<'_> {
        Encoder::new(&self.tables, self.embeddings.as_ref())
    }
}

fn predict_with<T: Scalar>(ctx: &Resources, model: &Path, d: &Dataset, exec: Executor) -> Result<Vec<Prediction>> {
    let cp = load_checkpoint(model).with_context(|| format!("loading {}", model.display()))?;
    let member = Member::<T>::from_checkpoint(&cp).map_err(|e| anyhow!("{}: {e}", model.display()))?;
    let texts: Vec<&str> = d.texts().collect();
    let encoded = ctx.encoder().encode_texts(texts.iter().copied());
    let input = EnsembleInput {
        texts: &texts,
        encoded: &encoded,
        tables: &ctx.tables,
    };
    member.predict(&input, exec).map_err(|e| anyhow!(e))
}

fn train_cmd<T: Scalar>(g: &Global, kind: MemberKind, data: Option<PathBuf>, exec: Executor) -> Result<()> {
    let mut ctx = Resources::load(g)?;
    let data = data.unwrap_or_else(|| ctx.cfg.dataset.clone());
    let d = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
    let out = g.output.clone().context("train needs --output")?;
    fs::create_dir_all(&out)?;
    let seed = g.seed.unwrap_or(ctx.cfg.seed);
    match kind {
        MemberKind::Cnn(k) => {
            if let Some(e) = &ctx.embeddings {
                ctx.cfg.arch.word.embed_dim = e.dim();
            }
            let set = ctx.encoder().encode(&d);
            let mut net = Network::<T>::build(k, &ctx.cfg.arch, seed)?;
            let tc = TrainConfig {
                seed: derive_seed(seed, &[1]),
                ..ctx.cfg.train.clone()
            };
            let mut cps = Vec::new();
            train_with(&mut net, &set, &tc, |cp| {
                let path = out.join(format!("epoch{:03}.ckpt", cps.len() + 1));
                save_checkpoint(&cp, &path)?;
                eprintln!(
                    "epoch {}: loss {:.4} {} {:.4}",
                    cps.len() + 1,
                    cp.metric("train_loss").unwrap_or(f64::NAN),
                    tc.selection_metric.key(),
                    cp.metric(tc.selection_metric.key()).unwrap_or(f64::NAN)
                );
                cps.push(cp);
                Ok(())
            })?;
            let best = select_best_epoch(&cps, tc.selection_metric.key())?;
            save_checkpoint(best, &out.join("best.ckpt"))?;
            println!("best epoch {} written to {}", best.epoch, out.join("best.ckpt").display());
        }
        MemberKind::Baseline(k) => {
            let b = Baseline::train(k, &d, &ctx.tables, &ctx.cfg.baselines, seed, exec)?;
            let path = out.join(format!("{}.ckpt", k.name()));
            save_checkpoint(&b.to_checkpoint(), &path)?;
            println!("{} written to {}", k.name(), path.display());
        }
    }
    Ok(())
}

fn ensemble_cmd<T: Scalar>(g: &Global, spec: &Path, data: &Path, free: bool, exec: Executor) -> Result<()> {
    let ctx = Resources::load(g)?;
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let base = spec.parent().unwrap_or(Path::new("."));
    let spec = EnsembleSpec::parse(&text, base, free)?;
    let members = spec.load::<T>()?;
    let d = load_dataset(data)?;
    let texts: Vec<&str> = d.texts().collect();
    let encoded = ctx.encoder().encode_texts(texts.iter().copied());
    let input = EnsembleInput {
        texts: &texts,
        encoded: &encoded,
        tables: &ctx.tables,
    };
    let votes = ensemble_predict(&members, &input, exec)?;
    let mut tsv = String::from("id\tlabel\tpositive_votes\tnegative_votes\tmean_positive_prob\n");
    for (t, v) in d.items().iter().zip(&votes) {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.6}\n",
            t.id, v.label, v.positive_votes, v.negative_votes, v.mean_positive_prob
        ));
    }
    match &g.output {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("votes.tsv"), &tsv)?;
        }
        None if d.labels().is_err() => print!("{tsv}"),
        None => {}
    }
    if let Ok(gold) = d.labels() {
        let labels: Vec<Label> = votes.iter().map(|v| v.label).collect();
        let report = compute_metrics(&labels, &gold)?;
        print!("{}", render(&[single(data, "ensemble", report)], g.format));
    }
    Ok(())
}
