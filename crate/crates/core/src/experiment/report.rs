//! Report tables: one CSV row per (scenario, model) and a markdown block
//! per scenario with measures as rows.

use std::fmt::Write as _;

use crate::eval::{Confusion, MetricsReport};

pub const ENSEMBLE_CNN: &str = "ensemble_cnn";
pub const ENSEMBLE_ML: &str = "ensemble_ml";

/// Column order of the markdown tables.
pub const MODEL_ORDER: [&str; 8] = [
    ENSEMBLE_CNN,
    ENSEMBLE_ML,
    "char_aux",
    "char_cnn",
    "word_aux",
    "svm",
    "random_forest",
    "naive_bayes",
];

pub fn display_name(model: &str) -> &str {
    match model {
        ENSEMBLE_CNN => "Ensemble CNN",
        ENSEMBLE_ML => "Ensemble ML",
        "svm" => "SVM",
        "random_forest" => "Random Forest",
        "naive_bayes" => "Naive Bayes",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    /// Fold means; counts are summed over folds.
    pub metrics: MetricsReport,
    pub per_fold: Vec<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    /// `"50:50"` style.
    pub scenario: String,
    pub rows: Vec<ReportRow>,
    /// Individual ensemble members (`svm_0`, ...); not part of the report
    /// tables.
    pub members: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?} (csv or markdown)")),
        }
    }
}

pub const CSV_HEADER: &str = "scenario,model,accuracy,precision_p,recall_p,f1_p,TP,FP,FN,TN";

pub fn csv_row(scenario: &str, model: &str, m: &MetricsReport) -> String {
    format!(
        "{scenario},{model},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
        m.accuracy, m.precision_p, m.recall_p, m.f1_p, m.counts.tp, m.counts.fp, m.counts.fn_, m.counts.tn
    )
}

pub fn to_csv(results: &[ScenarioResult]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in results {
        for row in &r.rows {
            s.push_str(&csv_row(&r.scenario, &row.model, &row.metrics));
            s.push('\n');
        }
    }
    s
}

/// One block per scenario: measures as rows, models as columns, 4 decimals.
pub fn to_markdown(results: &[ScenarioResult]) -> String {
    let mut s = String::new();
    for (i, r) in results.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "### Scenario {}\n", r.scenario);
        let mut rows: Vec<&ReportRow> = r.rows.iter().collect();
        rows.sort_by_key(|row| MODEL_ORDER.iter().position(|m| *m == row.model).unwrap_or(usize::MAX));
        s.push_str("| Measure |");
        for row in &rows {
            let _ = write!(s, " {} |", display_name(&row.model));
        }
        s.push_str("\n|---|");
        for _ in &rows {
            s.push_str("---|");
        }
        s.push('\n');
        for (label, key) in [
            ("Accuracy", "accuracy"),
            ("Precision_p", "precision_p"),
            ("Recall_p", "recall_p"),
            ("F1 score_p", "f1_p"),
        ] {
            let _ = write!(s, "| {label} |");
            for row in &rows {
                let _ = write!(s, " {:.4} |", row.metrics.measure(key).unwrap_or(f64::NAN));
            }
            s.push('\n');
        }
    }
    s
}

pub fn render(results: &[ScenarioResult], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => to_csv(results),
        ReportFormat::Markdown => to_markdown(results),
    }
}

/// A parsed CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub scenario: String,
    pub model: String,
    pub metrics: MetricsReport,
}

/// Parses CSV produced by [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<CsvRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing or unexpected CSV header".into());
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 10 {
                return Err(format!("row {}: expected 10 columns", n + 2));
            }
            let f = |i: usize| c[i].parse::<f64>().map_err(|_| format!("row {}: bad number {:?}", n + 2, c[i]));
            let u = |i: usize| c[i].parse::<u64>().map_err(|_| format!("row {}: bad count {:?}", n + 2, c[i]));
            Ok(CsvRecord {
                scenario: c[0].to_string(),
                model: c[1].to_string(),
                metrics: MetricsReport {
                    accuracy: f(2)?,
                    precision_p: f(3)?,
                    recall_p: f(4)?,
                    f1_p: f(5)?,
                    counts: Confusion {
                        tp: u(6)?,
                        fp: u(7)?,
                        fn_: u(8)?,
                        tn: u(9)?,
                    },
                },
            })
        })
        .collect()
}
