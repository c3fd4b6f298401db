use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_training, BaselineError, BowVector};
use crate::corpus::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Project onto the ball of radius `1/√λ` after each step.
    pub project: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            epochs: 20,
            seed: 0,
            project: true,
        }
    }
}

/// Linear SVM. The bias is learned as the weight of a constant feature
/// whose value is the mean training-vector norm, so training is
/// scale-equivariant.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias_weight: f64,
    pub bias_feature: f64,
    pub platt_a: f64,
    pub platt_b: f64,
}

impl SvmModel {
    pub fn bias(&self) -> f64 {
        self.bias_weight * self.bias_feature
    }

    pub fn decision(&self, x: &BowVector) -> f64 {
        let s: f64 = x
            .entries()
            .filter(|&(i, _)| i < self.weights.len())
            .map(|(i, v)| self.weights[i] * v)
            .sum();
        s + self.bias()
    }

    /// Calibrated positive probability.
    pub fn probability(&self, x: &BowVector) -> f64 {
        platt_probability(self.platt_a, self.platt_b, self.decision(x))
    }

    /// Class from the sign of the decision value (0 is negative) plus the
    /// calibrated positive probability.
    pub fn predict(&self, x: &BowVector) -> (Label, f64) {
        let s = self.decision(x);
        (Label::from_bool(s > 0.0), platt_probability(self.platt_a, self.platt_b, s))
    }

    /// `λ/2 ‖w‖² + mean hinge` over a labeled set (bias weight included in
    /// the norm, as trained).
    pub fn objective(&self, xs: &[BowVector], ys: &[Label], lambda: f64) -> f64 {
        let norm: f64 = self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias_weight * self.bias_weight;
        let hinge: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (1.0 - sign(*y) * self.decision(x)).max(0.0))
            .sum::<f64>()
            / xs.len() as f64;
        lambda / 2.0 * norm + hinge
    }
}

fn sign(y: Label) -> f64 {
    if y.is_positive() {
        1.0
    } else {
        -1.0
    }
}

/// Stochastic sub-gradient descent (step `1/(λt)`), one shuffled pass per
/// epoch. `on_epoch` sees the uncalibrated model after every epoch.
pub fn train_svm_with(
    xs: &[BowVector],
    ys: &[Label],
    cfg: &SvmConfig,
    mut on_epoch: impl FnMut(usize, &SvmModel),
) -> Result<SvmModel, BaselineError> {
    let dim = check_training(xs, ys)?;
    if !(cfg.lambda > 0.0) || cfg.epochs == 0 {
        return Err(BaselineError::Config("SVM needs lambda > 0 and epochs > 0".into()));
    }
    let bias_feature = xs.iter().map(|x| x.norm_sq().sqrt()).sum::<f64>() / xs.len() as f64;
    let bias_feature = if bias_feature > 0.0 { bias_feature } else { 1.0 };
    let mut m = SvmModel {
        weights: vec![0.0; dim],
        bias_weight: 0.0,
        bias_feature,
        platt_a: -1.0,
        platt_b: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut t = 0u64;
    // w is kept as scale · v so the shrink step is O(1)
    let mut scale = 1.0f64;
    let mut v = vec![0.0f64; dim];
    let mut vb = 0.0f64;
    let mut v_norm_sq = 0.0f64;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let y = sign(ys[i]);
            let x = &xs[i];
            let margin = y * scale * (x.dot(&v) + vb * bias_feature);
            let shrink = 1.0 - eta * cfg.lambda;
            if shrink == 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                vb = 0.0;
                v_norm_sq = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let step = eta * y / scale;
                for (j, val) in x.entries() {
                    let old = v[j];
                    v[j] += step * val;
                    v_norm_sq += v[j] * v[j] - old * old;
                }
                let old = vb;
                vb += step * bias_feature;
                v_norm_sq += vb * vb - old * old;
            }
            if cfg.project {
                let norm = scale * v_norm_sq.max(0.0).sqrt();
                let radius = 1.0 / cfg.lambda.sqrt();
                if norm > radius {
                    scale *= radius / norm;
                }
            }
            if scale.abs() < 1e-100 {
                v.iter_mut().for_each(|w| *w *= scale);
                vb *= scale;
                v_norm_sq = v.iter().map(|w| w * w).sum::<f64>() + vb * vb;
                scale = 1.0;
            }
        }
        m.weights = v.iter().map(|w| w * scale).collect();
        m.bias_weight = vb * scale;
        on_epoch(epoch, &m);
    }
    let scores: Vec<f64> = xs.iter().map(|x| m.decision(x)).collect();
    let (a, b) = platt_fit(&scores, ys)?;
    m.platt_a = a;
    m.platt_b = b;
    Ok(m)
}

pub fn train_svm(xs: &[BowVector], ys: &[Label], cfg: &SvmConfig) -> Result<SvmModel, BaselineError> {
    train_svm_with(xs, ys, cfg, |_, _| {})
}

/// `1 / (1 + exp(A·s + B))`, evaluated without overflow.
pub fn platt_probability(a: f64, b: f64, s: f64) -> f64 {
    let f = a * s + b;
    if f >= 0.0 {
        let e = (-f).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + f.exp())
    }
}

/// Fits Platt's sigmoid by Newton's method with backtracking on the
/// smoothed-target negative log-likelihood.
pub fn platt_fit(scores: &[f64], labels: &[Label]) -> Result<(f64, f64), BaselineError> {
    if scores.len() != labels.len() {
        return Err(BaselineError::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|l| l.is_positive()).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(BaselineError::SingleClass);
    }
    let t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    let t_neg = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels.iter().map(|l| if l.is_positive() { t_pos } else { t_neg }).collect();

    let nll = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(&s, &t)| {
                let f = a * s + b;
                // -[t ln p + (1-t) ln(1-p)] with p = 1/(1+e^f)
                if f >= 0.0 {
                    t * f + (-f).exp().ln_1p()
                } else {
                    (t - 1.0) * f + f.exp().ln_1p()
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut fval = nll(a, b);
    const RIDGE: f64 = 1e-12;
    for _ in 0..100 {
        let (mut ga, mut gb, mut h11, mut h22, mut h21) = (0.0, 0.0, RIDGE, RIDGE, 0.0);
        for (&s, &t) in scores.iter().zip(&targets) {
            let p = platt_probability(a, b, s);
            let d = t - p;
            let w = p * (1.0 - p);
            ga += d * s;
            gb += d;
            h11 += w * s * s;
            h22 += w;
            h21 += w * s;
        }
        if ga.hypot(gb) < 1e-8 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * ga - h21 * gb) / det;
        let db = -(-h21 * ga + h11 * gb) / det;
        let slope = ga * da + gb * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = nll(na, nb);
            if nf < fval + 1e-4 * step * slope {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    Ok((a, b))
}
