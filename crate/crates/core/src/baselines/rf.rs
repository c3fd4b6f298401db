use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_training, BaselineError, BowVector};
use crate::corpus::Label;
use crate::parallel::Executor;

#[derive(Debug, Clone, PartialEq)]
pub struct RfConfig {
    pub trees: usize,
    /// `None` grows until purity or the minimum split size.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            trees: 50,
            max_depth: Some(16),
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Class counts `[negative, positive]` of the training rows that reached it.
    Leaf { counts: [u32; 2] },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// Root is node 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f32]) -> [u32; 2] {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = x.get(feature as usize).copied().unwrap_or(0.0);
                    i = if v <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    /// Majority class of the reached leaf; ties are negative.
    pub fn predict(&self, x: &[f32]) -> Label {
        let [n, p] = self.leaf_counts(x);
        Label::from_bool(p > n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfModel {
    pub trees: Vec<Tree>,
    pub dim: usize,
}

impl RfModel {
    pub fn votes(&self, x: &[f32]) -> Vec<Label> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// Majority over trees (ties negative) and the positive vote share.
    pub fn predict_dense(&self, x: &[f32]) -> (Label, f64) {
        let pos = self.votes(x).iter().filter(|v| v.is_positive()).count();
        let neg = self.trees.len() - pos;
        (Label::from_bool(pos > neg), pos as f64 / self.trees.len() as f64)
    }

    pub fn predict(&self, x: &BowVector) -> (Label, f64) {
        let mut d = x.to_dense_f32();
        d.resize(self.dim, 0.0);
        self.predict_dense(&d)
    }
}

/// Gini impurity `1 − Σ p_c²` of class counts.
pub fn gini(counts: [u32; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[0] as f64 / n;
    let q = counts[1] as f64 / n;
    1.0 - p * p - q * q
}

/// Seed of tree `i`, derived from the forest seed.
pub fn tree_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn train_rf(xs: &[BowVector], ys: &[Label], cfg: &RfConfig, exec: Executor) -> Result<RfModel, BaselineError> {
    let dim = check_training(xs, ys)?;
    if cfg.trees == 0 || cfg.min_samples_split < 2 {
        return Err(BaselineError::Config("forest needs at least one tree and min_samples_split >= 2".into()));
    }
    let rows: Vec<Vec<f32>> = xs.iter().map(|x| {
        let mut d = x.to_dense_f32();
        d.resize(dim, 0.0);
        d
    }).collect();
    let trees = exec.map_range(cfg.trees, |i| grow_tree(&rows, ys, dim, cfg, tree_seed(cfg.seed, i)));
    Ok(RfModel { trees, dim })
}

/// One tree on dense rows.
pub fn grow_tree(rows: &[Vec<f32>], ys: &[Label], dim: usize, cfg: &RfConfig, seed: u64) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample: Vec<usize> = if cfg.bootstrap {
        (0..rows.len()).map(|_| rng.random_range(0..rows.len())).collect()
    } else {
        (0..rows.len()).collect()
    };
    let mtry = ((dim as f64).sqrt().floor() as usize).max(1);
    let mut g = Grower {
        rows,
        ys,
        cfg,
        mtry,
        dim,
        rng,
        nodes: Vec::new(),
        features: (0..dim).collect(),
    };
    g.grow(sample, 0);
    Tree { nodes: g.nodes }
}

struct Grower<'a> {
    rows: &'a [Vec<f32>],
    ys: &'a [Label],
    cfg: &'a RfConfig,
    mtry: usize,
    dim: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

struct Candidate {
    feature: usize,
    threshold: f32,
    impurity: f64,
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> [u32; 2] {
        let mut c = [0u32; 2];
        for &i in idx {
            c[self.ys[i].index()] += 1;
        }
        c
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let counts = self.counts(&idx);
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        let deep = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || deep || idx.len() < self.cfg.min_samples_split {
            return id;
        }
        let Some(best) = self.best_split(&idx, counts) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows[i][best.feature] <= best.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Best Gini split over `mtry` random features; keeps drawing further
    /// features while none of those seen so far can split the node.
    fn best_split(&mut self, idx: &[usize], total: [u32; 2]) -> Option<Candidate> {
        self.features.shuffle(&mut self.rng);
        let mut best: Option<Candidate> = None;
        let mut vals: Vec<(f32, usize)> = Vec::with_capacity(idx.len());
        for (tried, fi) in (0..self.dim).enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            let f = self.features[fi];
            vals.clear();
            vals.extend(idx.iter().map(|&i| (self.rows[i][f], self.ys[i].index())));
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0u32; 2];
            let n = idx.len() as f64;
            for k in 0..vals.len() - 1 {
                left[vals[k].1] += 1;
                if vals[k].0 == vals[k + 1].0 {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let nl = (left[0] + left[1]) as f64;
                let imp = (nl * gini(left) + (n - nl) * gini(right)) / n;
                if best.as_ref().is_none_or(|b| imp < b.impurity) {
                    let (a, b) = (vals[k].0, vals[k + 1].0);
                    let mut threshold = a + (b - a) / 2.0;
                    if !(threshold >= a && threshold < b) {
                        threshold = a;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        impurity: imp,
                    });
                }
            }
        }
        best
    }
}
