use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EncodedSet, ModelError, Network};
use crate::corpus::Label;
use crate::eval::compute_metrics;
use crate::nn::{Adam, AdamConfig, ModelCheckpoint, Scalar};
use crate::parallel::Executor;

/// Validation metric used to pick the best epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMetric {
    F1Positive,
    Accuracy,
}

impl SelectionMetric {
    pub fn key(self) -> &'static str {
        match self {
            SelectionMetric::F1Positive => "f1_p",
            SelectionMetric::Accuracy => "accuracy",
        }
    }

    pub fn parse(s: &str) -> Option<SelectionMetric> {
        match s {
            "f1_p" => Some(SelectionMetric::F1Positive),
            "accuracy" => Some(SelectionMetric::Accuracy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub selection_metric: SelectionMetric,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            seed: 0,
            validation_fraction: 0.1,
            selection_metric: SelectionMetric::F1Positive,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::Config("epochs and batch size must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(ModelError::Config(format!(
                "validation fraction {} outside (0, 0.5)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Stratified fit/validation split. Each class contributes
/// `round(fraction · n_class)` validation items, at least one when the class
/// has two or more items, and always leaves one for fitting.
pub fn split_validation(labels: &[Label], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for class in [Label::Positive, Label::Negative] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = (fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = 0;
        }
        val.extend_from_slice(&idx[..k]);
        fit.extend_from_slice(&idx[k..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Trains `net` in place and returns one checkpoint per epoch.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &EncodedSet,
    cfg: &TrainConfig,
) -> Result<Vec<ModelCheckpoint>, ModelError> {
    let mut out = Vec::with_capacity(cfg.epochs);
    train_with(net, data, cfg, |cp| {
        out.push(cp);
        Ok(())
    })?;
    Ok(out)
}

/// Like [`train`] but hands each epoch's checkpoint to `sink` as soon as it
/// exists (for writing to disk without holding every epoch in memory).
pub fn train_with<T: Scalar, F>(
    net: &mut Network<T>,
    data: &EncodedSet,
    cfg: &TrainConfig,
    mut sink: F,
) -> Result<(), ModelError>
where
    F: FnMut(ModelCheckpoint) -> Result<(), ModelError>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    if !data.is_labeled() {
        return Err(ModelError::Unlabeled);
    }
    let first = data.labels[0];
    if data.labels.iter().all(|&l| l == first) {
        return Err(ModelError::SingleClass(first));
    }
    // fail on an unusable input path before spending any time
    net.batch(data, &[0])?;

    let (fit, val) = split_validation(&data.labels, cfg.validation_fraction, cfg.seed);
    let val_set = data.select(&val);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_7A11);
    let mut adam = Adam::new(net.params(), cfg.adam);
    let mut order = fit.clone();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = net.batch(data, chunk)?;
            net.params_mut().zero_grads();
            let loss = super::Graph::new(net).loss_and_backward(&batch, Some(&mut rng))?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(ModelError::NonFinite { epoch, step });
            }
            adam.step(net.params_mut());
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let mut cp = net.to_checkpoint(epoch);
        cp.metrics.insert("train_loss".into(), loss_sum / seen as f64);
        if !val_set.is_empty() {
            for (k, v) in validation_metrics(net, &val_set)? {
                cp.metrics.insert(k.into(), v);
            }
        }
        sink(cp)?;
    }
    Ok(())
}

/// Metrics of `net` on a labeled set, keyed as stored in checkpoints.
pub fn validation_metrics<T: Scalar>(
    net: &Network<T>,
    set: &EncodedSet,
) -> Result<Vec<(&'static str, f64)>, ModelError> {
    let preds = net.predict_set(set, Executor::Sequential)?;
    let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
    let m = compute_metrics(&labels, &set.labels).map_err(|e| ModelError::Config(e.to_string()))?;
    Ok(vec![
        ("accuracy", m.accuracy),
        ("precision_p", m.precision_p),
        ("recall_p", m.recall_p),
        ("f1_p", m.f1_p),
    ])
}

/// Checkpoint with the highest `metric`; ties go to the earliest epoch.
/// Checkpoints without the metric rank below any that have it.
pub fn select_best_epoch<'a>(cps: &'a [ModelCheckpoint], metric: &str) -> Result<&'a ModelCheckpoint, ModelError> {
    let mut best: Option<(&ModelCheckpoint, f64)> = None;
    for cp in cps {
        let v = cp.metric(metric).filter(|v| !v.is_nan()).unwrap_or(f64::NEG_INFINITY);
        match best {
            Some((b, bv)) if v < bv || (v == bv && cp.epoch >= b.epoch) => {}
            _ => best = Some((cp, v)),
        }
    }
    best.map(|(cp, _)| cp).ok_or(ModelError::NoCheckpoints)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(epoch: usize, f1: f64) -> ModelCheckpoint {
        let mut c = ModelCheckpoint::new(epoch);
        c.metrics.insert("f1_p".into(), f1);
        c
    }

    #[test]
    fn best_epoch_rules() {
        let cps = [cp(1, 0.5), cp(2, 0.8), cp(3, 0.7)];
        assert_eq!(select_best_epoch(&cps, "f1_p").unwrap().epoch, 2);
        let tie = [cp(1, 0.8), cp(2, 0.8)];
        assert_eq!(select_best_epoch(&tie, "f1_p").unwrap().epoch, 1);
        assert_eq!(select_best_epoch(&cps[..1], "f1_p").unwrap().epoch, 1);
        assert!(select_best_epoch(&[], "f1_p").is_err());
    }

    #[test]
    fn validation_split_is_stratified() {
        let labels: Vec<Label> = (0..100).map(|i| Label::from_bool(i < 30)).collect();
        let (fit, val) = split_validation(&labels, 0.1, 7);
        assert_eq!(fit.len() + val.len(), 100);
        assert_eq!(val.iter().filter(|&&i| labels[i].is_positive()).count(), 3);
        assert_eq!(val.len(), 10);
        let (_, v2) = split_validation(&labels, 0.1, 7);
        assert_eq!(val, v2);
    }

    #[test]
    fn rejects_bad_fraction() {
        let cfg = TrainConfig {
            validation_fraction: 0.5,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
