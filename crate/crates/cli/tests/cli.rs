use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ssc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssc")).args(args).output().expect("spawn ssc")
}

fn ok(args: &[&str]) -> String {
    let out = ssc(args);
    assert!(
        out.status.success(),
        "ssc {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthetic corpus plus a config with a very small char network.
fn setup(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data");
    ok(&["synth", "--positives", "60", "--negatives", "60", "--embed-dim", "8", "--output", p(&data)]);
    let conf = data.join("experiment.conf");
    let mut text = fs::read_to_string(&conf).unwrap();
    text.push_str("\n[train]\nepochs = 2\n\n[cnn]\nchar_filters = 4\nchar_dim = 4\nword_filters = 4\n");
    fs::write(&conf, text).unwrap();
    conf
}

#[test]
fn dataset_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let data = dir.path().join("data/dataset.tsv");

    let summary = ok(&["dataset", "validate", p(&data)]);
    assert_eq!(summary.trim(), "120 items: 60 positive, 60 negative, 0 unlabeled");

    let folds = ok(&["dataset", "folds", p(&data), "--scenario", "50:50@40/20", "-k", "2"]);
    let lines: Vec<&str> = folds.lines().collect();
    assert_eq!(lines.len(), 2 * 60);
    assert_eq!(lines.iter().filter(|l| l.contains("\ttest\t")).count(), 40);

    let split = dir.path().join("split");
    ok(&["dataset", "resample", p(&data), "--scenario", "30:70@50/20", "--output", p(&split)]);
    let test = fs::read_to_string(split.join("test.tsv")).unwrap();
    assert_eq!(test.lines().count(), 20);
    assert_eq!(test.lines().filter(|l| l.split('\t').nth(1) == Some("1")).count(), 6);

    let dupes = dir.path().join("dupes.tsv");
    fs::write(&dupes, "a\t1\tsame text\nb\t0\tSame  TEXT\nc\t0\tother\n").unwrap();
    let kept = ok(&["dataset", "dedupe", p(&dupes)]);
    assert_eq!(kept.lines().count(), 2);

    let ann = dir.path().join("ann.tsv");
    fs::write(&ann, "x\tr1\t1\nx\tr2\t1\nx\tr3\t0\ny\tr1\t0\ny\tr2\t0\ny\tr3\t0\n").unwrap();
    let agg = ok(&["dataset", "aggregate", p(&ann)]);
    assert_eq!(agg, "x\tpositive\ny\tnegative\n");
    let agreement = ok(&["agreement", p(&ann), "--kappa", "r1", "r2"]);
    assert!(agreement.starts_with("krippendorff_alpha\t"));
    assert!(agreement.contains("cohen_kappa\t1.000000"));
}

#[test]
fn train_evaluate_predict_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let conf = setup(dir.path());
    let data = dir.path().join("data/dataset.tsv");
    let models = dir.path().join("models");

    for kind in ["svm", "random_forest", "naive_bayes"] {
        ok(&["train", "--kind", kind, "--config", p(&conf), "--output", p(&models)]);
        assert!(models.join(format!("{kind}.ckpt")).is_file());
    }
    let svm = models.join("svm.ckpt");
    let report = ok(&["evaluate", "--model", p(&svm), "--data", p(&data), "--config", p(&conf)]);
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("scenario,model,accuracy,precision_p,recall_p,f1_p,TP,FP,FN,TN"));
    assert!(lines.next().unwrap().starts_with("dataset.tsv,svm,"));

    let md = ok(&["evaluate", "--model", p(&svm), "--data", p(&data), "--config", p(&conf), "--format", "markdown"]);
    assert!(md.starts_with("### Scenario dataset.tsv"));

    let preds = ok(&["predict", "--model", p(&svm), "--data", p(&data), "--config", p(&conf)]);
    assert_eq!(preds.lines().count(), 120);
    assert!(preds.lines().all(|l| l.split('\t').count() == 3));

    let cnn = dir.path().join("cnn");
    ok(&["train", "--kind", "char_cnn", "--config", p(&conf), "--output", p(&cnn), "--data", p(&data)]);
    for f in ["epoch001.ckpt", "epoch002.ckpt", "best.ckpt"] {
        assert!(cnn.join(f).is_file(), "{f}");
    }

    let spec = dir.path().join("members.txt");
    fs::write(
        &spec,
        format!("svm {}\nnaive_bayes {}\nchar_cnn {}\n", p(&svm), p(&models.join("naive_bayes.ckpt")), p(&cnn.join("best.ckpt"))),
    )
    .unwrap();
    let strict = ssc(&["ensemble", "--spec", p(&spec), "--data", p(&data), "--config", p(&conf)]);
    assert!(!strict.status.success());

    let votes_dir = dir.path().join("votes");
    ok(&["ensemble", "--spec", p(&spec), "--data", p(&data), "--config", p(&conf), "--free", "--output", p(&votes_dir)]);
    let votes = fs::read_to_string(votes_dir.join("votes.tsv")).unwrap();
    assert_eq!(votes.lines().count(), 121);

    let sampled = ok(&["prefilter", "--model", p(&svm), "--data", p(&data), "--config", p(&conf), "--sample", "10"]);
    assert!(sampled.lines().count() <= 10);
}

#[test]
fn experiment_subcommand_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let conf = setup(dir.path());
    let mut text = fs::read_to_string(&conf).unwrap();
    text.push_str("\n[experiment]\nscenarios = 50:50@40/20\nfolds = 2\nroster = svm, naive_bayes\n");
    fs::write(&conf, text).unwrap();
    let out = dir.path().join("run");
    let csv = ok(&["experiment", "--config", p(&conf), "--output", p(&out), "--jobs", "1"]);
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap(), csv);
    assert!(out.join("report.md").is_file());
}

#[test]
fn errors_exit_nonzero() {
    let out = ssc(&["dataset", "validate", "/nonexistent/data.tsv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert!(!ssc(&["train", "--kind", "perceptron"]).status.success());
    assert!(!ssc(&["experiment"]).status.success());
}
