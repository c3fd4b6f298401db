//! Classification metrics, majority voting, cross-validation and
//! inter-annotator agreement.

use std::fmt;

use thiserror::Error;

use crate::corpus::{AnnotationSet, Dataset, FoldPlan, Label};
use crate::parallel::Executor;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions vs {1} gold labels")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty list")]
    Empty,
    #[error("majority vote over zero votes")]
    NoVotes,
    #[error("agreement not computable: {0}")]
    NotComputable(String),
}

/// Confusion counts with the positive class as "positive".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn tally(pred: &[Label], gold: &[Label]) -> Result<Confusion, EvalError> {
        if pred.len() != gold.len() {
            return Err(EvalError::LengthMismatch(pred.len(), gold.len()));
        }
        let mut c = Confusion::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (Label::Positive, Label::Positive) => c.tp += 1,
                (Label::Positive, Label::Negative) => c.fp += 1,
                (Label::Negative, Label::Positive) => c.fn_ += 1,
                (Label::Negative, Label::Negative) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&self, o: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Accuracy plus positive-class precision, recall and F1. For averaged
/// reports the metrics are fold means and `counts` is the summed confusion.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_p: f64,
    pub recall_p: f64,
    pub f1_p: f64,
    pub counts: Confusion,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Zero-division conventions: precision, recall and F1 are 0 when their
    /// denominator is 0. Accuracy of an empty confusion is 0.
    pub fn from_confusion(c: Confusion) -> MetricsReport {
        let precision_p = ratio(c.tp, c.tp + c.fp);
        let recall_p = ratio(c.tp, c.tp + c.fn_);
        let f1_p = if precision_p + recall_p == 0.0 {
            0.0
        } else {
            2.0 * precision_p * recall_p / (precision_p + recall_p)
        };
        MetricsReport {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision_p,
            recall_p,
            f1_p,
            counts: c,
        }
    }

    /// Value of a named measure (`accuracy`, `precision_p`, `recall_p`, `f1_p`).
    pub fn measure(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => Some(self.accuracy),
            "precision_p" => Some(self.precision_p),
            "recall_p" => Some(self.recall_p),
            "f1_p" => Some(self.f1_p),
            _ => None,
        }
    }

    pub const MEASURES: [&'static str; 4] = ["accuracy", "precision_p", "recall_p", "f1_p"];

    /// Unweighted mean of each measure; confusion counts are summed.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricsReport {
            accuracy: avg(|r| r.accuracy),
            precision_p: avg(|r| r.precision_p),
            recall_p: avg(|r| r.recall_p),
            f1_p: avg(|r| r.f1_p),
            counts: reports.iter().fold(Confusion::default(), |a, r| a.add(&r.counts)),
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "acc {:.4}  P_p {:.4}  R_p {:.4}  F1_p {:.4}  (TP {} FP {} FN {} TN {})",
            self.accuracy, self.precision_p, self.recall_p, self.f1_p, self.counts.tp, self.counts.fp, self.counts.fn_, self.counts.tn
        )
    }
}

pub fn compute_metrics(pred: &[Label], gold: &[Label]) -> Result<MetricsReport, EvalError> {
    if pred.is_empty() && gold.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(MetricsReport::from_confusion(Confusion::tally(pred, gold)?))
}

/// Strict majority wins; a tie goes positive only if the mean positive
/// probability exceeds 0.5.
pub fn majority_vote(votes: &[Label], probs: &[f64]) -> Result<Label, EvalError> {
    if votes.is_empty() {
        return Err(EvalError::NoVotes);
    }
    if probs.len() != votes.len() {
        return Err(EvalError::LengthMismatch(probs.len(), votes.len()));
    }
    let pos = votes.iter().filter(|v| v.is_positive()).count();
    let neg = votes.len() - pos;
    Ok(match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => Label::Positive,
        std::cmp::Ordering::Less => Label::Negative,
        std::cmp::Ordering::Equal => {
            let mean = probs.iter().sum::<f64>() / probs.len() as f64;
            Label::from_bool(mean > 0.5)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub per_fold: Vec<MetricsReport>,
    pub mean: MetricsReport,
}

#[derive(Debug, Error)]
#[error("fold {fold} failed: {source}")]
pub struct FoldFailure<E: std::error::Error + 'static> {
    pub fold: usize,
    #[source]
    pub source: E,
}

/// Runs `trainer(fold, train, test)` on every fold and averages the
/// reports. Folds may run in parallel; results are merged by fold index and
/// the lowest failing fold is reported.
pub fn cross_validate<E, F>(
    plan: &FoldPlan,
    pool: &Dataset,
    exec: Executor,
    trainer: F,
) -> Result<CvReport, FoldFailure<E>>
where
    E: std::error::Error + Send + 'static,
    F: Fn(usize, &Dataset, &Dataset) -> Result<MetricsReport, E> + Sync,
{
    let per_fold = exec.try_map_range(plan.k(), |f| {
        let (train, test) = plan.materialize(pool, f);
        trainer(f, &train, &test).map_err(|source| FoldFailure { fold: f, source })
    })?;
    let mean = MetricsReport::mean(&per_fold).expect("fold plans have at least one fold");
    Ok(CvReport { per_fold, mean })
}

/// Krippendorff's alpha for nominal labels via the coincidence matrix.
/// Items with fewer than two annotations are not pairable and are skipped.
/// When every pairable value falls in one category the expected
/// disagreement is zero and alpha is reported as 1.0.
pub fn krippendorff_alpha(ann: &AnnotationSet) -> Result<f64, EvalError> {
    let mut o = [[0.0f64; 2]; 2];
    for (_, values) in ann.values() {
        let m = values.len();
        if m < 2 {
            continue;
        }
        let mut counts = [0.0f64; 2];
        for v in &values {
            counts[v.index()] += 1.0;
        }
        let w = 1.0 / (m as f64 - 1.0);
        for c in 0..2 {
            for k in 0..2 {
                let pairs = if c == k { counts[c] * (counts[c] - 1.0) } else { counts[c] * counts[k] };
                o[c][k] += pairs * w;
            }
        }
    }
    let n_c = [o[0][0] + o[0][1], o[1][0] + o[1][1]];
    let n = n_c[0] + n_c[1];
    if n == 0.0 {
        return Err(EvalError::NotComputable("no item has two or more annotations".into()));
    }
    let observed = o[0][1] + o[1][0];
    let expected = 2.0 * n_c[0] * n_c[1] / (n - 1.0);
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - observed / expected)
}

/// Cohen's kappa for two raters; if chance agreement is 1 the result is 1.0
/// on perfect observed agreement and 0.0 otherwise.
pub fn cohen_kappa(a: &[Label], b: &[Label]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pos = |v: &[Label]| v.iter().filter(|l| l.is_positive()).count() as f64 / n;
    let (pa, pb) = (pos(a), pos(b));
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if p_e == 1.0 {
        return Ok(if p_o == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
