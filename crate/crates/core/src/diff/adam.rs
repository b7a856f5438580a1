use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl Adam {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Tensor> = params.into_iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        let second = first.clone();
        Self { config, first, second, steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One bias-corrected update, descending along `grads`.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Tensor>, grads: &[Tensor], lr: f64) {
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - libm::pow(beta1, self.steps as f64);
        let c2 = 1.0 - libm::pow(beta2, self.steps as f64);
        let mut count = 0;
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            count += 1;
            assert_eq!(p.shape(), g.shape(), "gradient shape");
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
                let mhat = md[i] / c1;
                let vhat = vd[i] / c2;
                pd[i] -= lr * mhat / (libm::sqrt(vhat) + eps);
            }
        }
        assert_eq!(count, grads.len(), "one gradient per parameter tensor");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![Tensor::row(vec![0.5, -1.5])];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            adam.step(p.iter_mut(), &[Tensor::zeros(1, 2)], 0.1);
        }
        assert_eq!(p[0].data(), &[0.5, -1.5]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // closed form after one step: m_hat = g, v_hat = g^2, so the move is
        // lr * g / (|g| + eps)
        let mut p = vec![Tensor::row(vec![0.0, 0.0])];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(p.iter_mut(), &[Tensor::row(vec![3.0, -0.02])], 0.01);
        let expect = |g: f64| -0.01 * g / (g.abs() + 1e-8);
        assert!((p[0].get(0, 0) - expect(3.0)).abs() < 1e-15);
        assert!((p[0].get(0, 1) - expect(-0.02)).abs() < 1e-15);
        assert!((p[0].get(0, 0) + 0.01).abs() < 1e-9);
    }

    #[test]
    fn runs_are_reproducible() {
        let run = || {
            let mut p = vec![Tensor::row(vec![1.0, 2.0])];
            let mut adam = Adam::new(AdamConfig::default(), &p);
            for k in 0..50 {
                let g = Tensor::row(vec![libm::sin(k as f64), 2.0 * p[0].get(0, 1)]);
                adam.step(p.iter_mut(), &[g], 0.05);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
