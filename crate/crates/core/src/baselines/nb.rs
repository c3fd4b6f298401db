use super::{check_training, BaselineError, BowVector};
use crate::corpus::Label;

/// Multinomial Naive Bayes over feature values (TF-IDF weights and aux
/// entries) with add-one smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    /// `[negative, positive]`.
    pub log_prior: [f64; 2],
    /// `log_lik[c][j] = ln((N_cj + 1) / (N_c + V))`.
    pub log_lik: [Vec<f64>; 2],
}

pub fn train_nb(xs: &[BowVector], ys: &[Label]) -> Result<NbModel, BaselineError> {
    let dim = check_training(xs, ys)?;
    let mut mass = [vec![0.0f64; dim], vec![0.0f64; dim]];
    let mut docs = [0usize; 2];
    for (x, y) in xs.iter().zip(ys) {
        let c = y.index();
        docs[c] += 1;
        for (j, v) in x.entries() {
            mass[c][j] += v;
        }
    }
    let n = xs.len() as f64;
    let log_prior = [(docs[0] as f64 / n).ln(), (docs[1] as f64 / n).ln()];
    let log_lik = mass.map(|m| {
        let total: f64 = m.iter().sum::<f64>() + dim as f64;
        m.iter().map(|&v| ((v + 1.0) / total).ln()).collect()
    });
    Ok(NbModel { log_prior, log_lik })
}

impl NbModel {
    pub fn dim(&self) -> usize {
        self.log_lik[0].len()
    }

    /// Joint log-likelihood per class.
    pub fn joint(&self, x: &BowVector) -> [f64; 2] {
        let mut s = self.log_prior;
        for (j, v) in x.entries() {
            if j < self.dim() {
                s[0] += v * self.log_lik[0][j];
                s[1] += v * self.log_lik[1][j];
            }
        }
        s
    }

    /// Posterior of the positive class, normalized by log-sum-exp.
    pub fn positive_posterior(&self, x: &BowVector) -> f64 {
        let [a, b] = self.joint(x);
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        (b - lse).exp()
    }

    /// Class and positive probability; a 0.5 posterior is negative.
    pub fn predict(&self, x: &BowVector) -> (Label, f64) {
        let p = self.positive_posterior(x);
        (Label::from_bool(p > 0.5), p)
    }
}
