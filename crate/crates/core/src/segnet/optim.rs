//! AdamW with decoupled weight decay and a polynomial learning-rate decay.

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub total_steps: u64,
    pub poly_power: f64,
    pub(crate) step: u64,
    pub(crate) m: Vec<Vec<f64>>,
    pub(crate) v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(base_lr: f64, weight_decay: f64, total_steps: u64) -> Self {
        Self {
            base_lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            total_steps: total_steps.max(1),
            poly_power: 0.9,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Completed updates.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// `base_lr * (1 - t / total_steps)^power`, clamped at zero past the end.
    pub fn lr_at(&self, t: u64) -> f64 {
        let frac = (1.0 - t as f64 / self.total_steps as f64).max(0.0);
        self.base_lr * frac.powf(self.poly_power)
    }

    /// Rate used by the next update (`t` = updates already taken).
    pub fn current_lr(&self) -> f64 {
        self.lr_at(self.step)
    }

    /// Applies one update to `params` in place and returns the rate used.
    pub fn update(&mut self, params: &mut [&mut Vec<f64>], grads: &[&[f64]]) -> f64 {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter tensor");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, (theta, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(theta.len(), g.len(), "gradient shape mismatch");
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..theta.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let old = theta[i];
                theta[i] = old - lr * (m_hat / (v_hat.sqrt() + self.eps)) - lr * self.weight_decay * old;
            }
        }
        lr
    }
}
