//! Adam family over flat lists of named tensors.
//!
//! `decoupled = true` applies weight decay directly to the parameters
//! (AdamW); otherwise the decay joins the gradient, matching the classic
//! L2-coupled Adam.

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decoupled: bool,
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
    step: usize,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Self {
            m: shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect(),
            step: 0,
        }
    }

    /// One update over parallel (parameter, gradient) tensor lists.
    pub fn step(
        &mut self,
        params: &mut [&mut DMatrix<f64>],
        grads: &[&DMatrix<f64>],
        cfg: &AdamConfig,
    ) {
        assert_eq!(params.len(), self.m.len(), "optimizer shape mismatch");
        assert_eq!(params.len(), grads.len(), "gradient list mismatch");
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for (param, (grad, (m, v))) in params
            .iter_mut()
            .zip(grads.iter().zip(self.m.iter_mut().zip(self.v.iter_mut())))
        {
            for i in 0..param.len() {
                let mut g = grad[i];
                if !cfg.decoupled {
                    g += cfg.weight_decay * param[i];
                }
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let mut update = m_hat / (v_hat.sqrt() + cfg.eps);
                if cfg.decoupled {
                    update += cfg.weight_decay * param[i];
                }
                param[i] -= cfg.lr * update;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_min(cfg: AdamConfig) -> f64 {
        // minimize (x-3)² from 0.
        let mut x = DMatrix::from_element(1, 1, 0.0);
        let mut state = AdamState::new(&[(1, 1)]);
        for _ in 0..5000 {
            let g = DMatrix::from_element(1, 1, 2.0 * (x[0] - 3.0));
            state.step(&mut [&mut x], &[&g], &cfg);
        }
        x[0]
    }

    #[test]
    fn adam_reaches_quadratic_minimum() {
        let x = quadratic_min(AdamConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            decoupled: false,
        });
        assert!((x - 3.0).abs() < 1e-3, "x = {x}");
    }

    #[test]
    fn decoupled_decay_shrinks_the_optimum() {
        let x = quadratic_min(AdamConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.5,
            decoupled: true,
        });
        // Decay pulls the fixed point below 3.
        assert!(x < 2.95 && x > 1.0, "x = {x}");
    }
}
