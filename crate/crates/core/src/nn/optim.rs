use super::params::ParamSet;
use super::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Adam<T> {
        let zeros = |p: &super::params::Param<T>| vec![T::zero(); p.value.len()];
        Adam {
            config,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update from the gradients currently stored in
    /// `params`. Frozen parameters are left untouched.
    pub fn step(&mut self, params: &mut ParamSet<T>) {
        assert_eq!(self.m.len(), params.len(), "optimizer/parameter mismatch");
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let bc1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let bc2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if p.frozen {
                continue;
            }
            let g = p.grad.data();
            let w = p.value.data_mut();
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] = w[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn one_param(values: &[f64], grads: &[f64]) -> ParamSet<f64> {
        let mut p = ParamSet::from_tensors(vec![(
            "w".into(),
            Tensor::from_f64(&[values.len()], values).unwrap(),
        )]);
        p.accumulate(0, grads);
        p
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = one_param(&[0.3, -0.7], &[0.0, 0.0]);
        let mut opt = Adam::new(&p, AdamConfig::default());
        opt.step(&mut p);
        assert_eq!(p.value(0).data(), [0.3, -0.7]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let g = [0.5, -2.0, 1e-3];
        let mut p = one_param(&[0.0; 3], &g);
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(&p, cfg);
        opt.step(&mut p);
        for (w, gi) in p.value(0).data().iter().zip(g) {
            // m̂ = g, v̂ = g² → Δ = -lr·g/(|g| + ε)
            let expected = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
            assert!((w + cfg.lr * gi.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = one_param(&[0.1, 0.2], &[0.3, -0.4]);
            let mut opt = Adam::new(&p, AdamConfig::default());
            for _ in 0..5 {
                opt.step(&mut p);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
