//! Adam optimizer over flat parameter slices.

/// Hyperparameters. The defaults follow the training setup used throughout
/// this crate: lr 3e-4, beta1 0.9, beta2 0.999, eps 0.01.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 0.01 }
    }
}

/// First/second-moment accumulators, one pair of buffers per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    hp: AdamParams,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(tensor_sizes: &[usize], hp: AdamParams) -> Self {
        AdamState {
            hp,
            step: 0,
            m: tensor_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: tensor_sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update:
    /// p -= lr * m_hat / (sqrt(v_hat) + eps).
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len(), "tensor count mismatch");
        assert_eq!(grads.len(), self.m.len(), "tensor count mismatch");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.hp.beta1.powi(t);
        let bc2 = 1.0 - self.hp.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            assert_eq!(p.len(), m.len(), "tensor shape mismatch");
            assert_eq!(g.len(), m.len(), "tensor shape mismatch");
            for i in 0..p.len() {
                m[i] = self.hp.beta1 * m[i] + (1.0 - self.hp.beta1) * g[i];
                v[i] = self.hp.beta2 * v[i] + (1.0 - self.hp.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.hp.lr * m_hat / (v_hat.sqrt() + self.hp.eps);
                debug_assert!(p[i].is_finite(), "non-finite parameter after update");
            }
        }
    }
}
