//! Majority-vote ensembles over CNN and baseline members.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::baselines::{Baseline, BaselineError, BaselineKind};
use crate::corpus::Label;
use crate::eval::{majority_vote, EvalError};
use crate::features::FeatureTables;
use crate::models::{CnnKind, EncodedSet, ModelError, Network, Prediction};
use crate::nn::{load_checkpoint, ModelCheckpoint, Scalar};
use crate::parallel::Executor;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("member {member}: {message}")]
    Member { member: String, message: String },
    #[error("ensemble composition: {0}")]
    Composition(String),
    #[error("ensemble spec line {line}: {message}")]
    Spec { line: usize, message: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemberKind {
    Cnn(CnnKind),
    Baseline(BaselineKind),
}

impl MemberKind {
    pub const ALL: [MemberKind; 6] = [
        MemberKind::Cnn(CnnKind::CharAux),
        MemberKind::Cnn(CnnKind::CharCnn),
        MemberKind::Cnn(CnnKind::WordAux),
        MemberKind::Baseline(BaselineKind::Svm),
        MemberKind::Baseline(BaselineKind::Rf),
        MemberKind::Baseline(BaselineKind::Nb),
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemberKind::Cnn(k) => k.name(),
            MemberKind::Baseline(k) => k.name(),
        }
    }

    pub fn is_cnn(self) -> bool {
        matches!(self, MemberKind::Cnn(_))
    }

    /// Reads the kind tag stored in a checkpoint.
    pub fn of_checkpoint(cp: &ModelCheckpoint) -> Option<MemberKind> {
        cp.meta.get("kind")?.parse().ok()
    }
}

impl fmt::Display for MemberKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MemberKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(k) = s.parse::<CnnKind>() {
            return Ok(MemberKind::Cnn(k));
        }
        s.parse::<BaselineKind>()
            .map(MemberKind::Baseline)
            .map_err(|_| format!("unknown model kind {s:?}"))
    }
}

/// The two six-member families: two members of each of three types.
pub const CNN_FAMILY: [CnnKind; 3] = [CnnKind::CharAux, CnnKind::CharCnn, CnnKind::WordAux];
pub const ML_FAMILY: [BaselineKind; 3] = [BaselineKind::Svm, BaselineKind::Rf, BaselineKind::Nb];
pub const MEMBERS_PER_TYPE: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MemberRef {
    pub kind: MemberKind,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub members: Vec<MemberRef>,
    /// Allow any non-empty composition.
    pub free: bool,
}

impl EnsembleSpec {
    /// `kind<whitespace>checkpoint-path` lines; `#` comments. Relative paths
    /// resolve against `base`.
    pub fn parse(content: &str, base: &Path, free: bool) -> Result<EnsembleSpec, EnsembleError> {
        let mut members = Vec::new();
        for (n, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| EnsembleError::Spec { line: n + 1, message };
            let (kind, path) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| err("expected `kind path`".into()))?;
            let kind: MemberKind = kind.parse().map_err(err)?;
            members.push(MemberRef {
                kind,
                checkpoint: base.join(path.trim()),
            });
        }
        let spec = EnsembleSpec { members, free };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        self.members
            .iter()
            .map(|m| format!("{}\t{}\n", m.kind, m.checkpoint.display()))
            .collect()
    }

    /// Strict specs must be exactly one of the two six-member families.
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let kinds: Vec<MemberKind> = self.members.iter().map(|m| m.kind).collect();
        check_composition(&kinds, self.free)
    }

    /// Loads every member; a failure names the member.
    pub fn load<T: Scalar>(&self) -> Result<Vec<Member<T>>, EnsembleError> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let name = format!("#{} ({}, {})", i + 1, m.kind, m.checkpoint.display());
                let fail = |message: String| EnsembleError::Member {
                    member: name.clone(),
                    message,
                };
                let cp = load_checkpoint(&m.checkpoint).map_err(|e| fail(e.to_string()))?;
                let member = Member::from_checkpoint(&cp).map_err(fail)?;
                if member.kind() != m.kind {
                    return Err(EnsembleError::Member {
                        member: name,
                        message: format!("checkpoint holds a {} model", member.kind()),
                    });
                }
                Ok(member)
            })
            .collect()
    }
}

pub fn check_composition(kinds: &[MemberKind], free: bool) -> Result<(), EnsembleError> {
    if kinds.is_empty() {
        return Err(EnsembleError::Composition("no members".into()));
    }
    if free {
        return Ok(());
    }
    let mut sorted = kinds.to_vec();
    sorted.sort();
    let family = |types: Vec<MemberKind>| {
        let mut v: Vec<MemberKind> = types
            .into_iter()
            .flat_map(|k| std::iter::repeat_n(k, MEMBERS_PER_TYPE))
            .collect();
        v.sort();
        v
    };
    let cnn = family(CNN_FAMILY.iter().map(|&k| MemberKind::Cnn(k)).collect());
    let ml = family(ML_FAMILY.iter().map(|&k| MemberKind::Baseline(k)).collect());
    if sorted == cnn || sorted == ml {
        Ok(())
    } else {
        Err(EnsembleError::Composition(
            "expected 2×char_aux + 2×char_cnn + 2×word_aux or 2×svm + 2×random_forest + 2×naive_bayes".into(),
        ))
    }
}

/// A loaded ensemble member.
#[derive(Debug, Clone)]
pub enum Member<T> {
    Cnn(Network<T>),
    Baseline(Baseline),
}

/// Everything a member may need to score a batch of texts.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleInput<'a> {
    pub texts: &'a [&'a str],
    /// Word and char encodings of `texts`, in the same order.
    pub encoded: &'a EncodedSet,
    pub tables: &'a FeatureTables,
}

impl<T: Scalar> Member<T> {
    pub fn kind(&self) -> MemberKind {
        match self {
            Member::Cnn(n) => MemberKind::Cnn(n.kind()),
            Member::Baseline(b) => MemberKind::Baseline(b.kind()),
        }
    }

    pub fn from_checkpoint(cp: &ModelCheckpoint) -> Result<Member<T>, String> {
        match MemberKind::of_checkpoint(cp) {
            Some(MemberKind::Cnn(_)) => Network::from_checkpoint(cp)
                .map(Member::Cnn)
                .map_err(|e: ModelError| e.to_string()),
            Some(MemberKind::Baseline(_)) => Baseline::from_checkpoint(cp)
                .map(Member::Baseline)
                .map_err(|e: BaselineError| e.to_string()),
            None => Err("checkpoint has no recognizable kind tag".into()),
        }
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        match self {
            Member::Cnn(n) => n.to_checkpoint(0),
            Member::Baseline(b) => b.to_checkpoint(),
        }
    }

    pub fn predict(&self, input: &EnsembleInput<'_>, exec: Executor) -> Result<Vec<Prediction>, String> {
        match self {
            Member::Cnn(n) => n.predict_set(input.encoded, exec).map_err(|e| e.to_string()),
            Member::Baseline(b) => Ok(b.predict_texts(input.texts, input.tables, exec)),
        }
    }
}

/// Combined decision for one input with its vote breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub label: Label,
    pub positive_votes: usize,
    pub negative_votes: usize,
    pub mean_positive_prob: f64,
}

/// Majority vote per input over aligned member predictions.
pub fn combine(member_preds: &[Vec<Prediction>]) -> Result<Vec<Vote>, EnsembleError> {
    let Some(first) = member_preds.first() else {
        return Err(EnsembleError::Composition("no members".into()));
    };
    let n = first.len();
    if member_preds.iter().any(|p| p.len() != n) {
        return Err(EnsembleError::Composition("members scored different numbers of inputs".into()));
    }
    (0..n)
        .map(|i| {
            let votes: Vec<Label> = member_preds.iter().map(|p| p[i].label).collect();
            let probs: Vec<f64> = member_preds.iter().map(|p| p[i].positive_prob).collect();
            let label = majority_vote(&votes, &probs)?;
            let positive_votes = votes.iter().filter(|v| v.is_positive()).count();
            Ok(Vote {
                label,
                positive_votes,
                negative_votes: votes.len() - positive_votes,
                mean_positive_prob: probs.iter().sum::<f64>() / probs.len() as f64,
            })
        })
        .collect()
}

/// Each member predicts with its own model; the ensemble combines votes.
pub fn ensemble_predict<T: Scalar>(
    members: &[Member<T>],
    input: &EnsembleInput<'_>,
    exec: Executor,
) -> Result<Vec<Vote>, EnsembleError> {
    let preds = exec.try_map_range(members.len(), |i| {
        members[i].predict(input, Executor::Sequential).map_err(|message| EnsembleError::Member {
            member: format!("#{} ({})", i + 1, members[i].kind()),
            message,
        })
    })?;
    combine(&preds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    fn preds(labels: &[Label]) -> Vec<Prediction> {
        labels
            .iter()
            .map(|&l| Prediction {
                label: l,
                positive_prob: if l.is_positive() { 0.9 } else { 0.1 },
            })
            .collect()
    }

    #[test]
    fn four_to_two_is_positive() {
        let members: Vec<Vec<Prediction>> = [P, P, P, P, N, N].iter().map(|&l| preds(&[l])).collect();
        let v = combine(&members).unwrap();
        assert_eq!(v[0].label, P);
        assert_eq!((v[0].positive_votes, v[0].negative_votes), (4, 2));
    }

    #[test]
    fn composition_rules() {
        let k = |s: &str| s.parse::<MemberKind>().unwrap();
        let cnn: Vec<MemberKind> = ["char_aux", "word_aux", "char_cnn", "char_aux", "char_cnn", "word_aux"]
            .iter()
            .map(|s| k(s))
            .collect();
        assert!(check_composition(&cnn, false).is_ok());
        assert!(check_composition(&cnn[..5], false).is_err());
        assert!(check_composition(&cnn[..5], true).is_ok());
        let mixed = [k("svm"), k("svm"), k("NB1"), k("naive_bayes"), k("RF1"), k("char_aux")];
        assert!(check_composition(&mixed, false).is_err());
    }
}
