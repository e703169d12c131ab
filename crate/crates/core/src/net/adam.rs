use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

/// Adam over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    cfg: AdamConfig,
    m: Vec<F>,
    v: Vec<F>,
    t: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
            t: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// Applies one update in place and returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut [F], grads: &[F]) -> F {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        let norm = grads.iter().fold(F::zero(), |acc, &g| acc + g * g).sqrt();
        let scale = match self.cfg.clip_norm {
            Some(c) if norm > F::of(c) => F::of(c) / norm,
            _ => F::one(),
        };
        self.t += 1;
        let (b1, b2) = (F::of(self.cfg.beta1), F::of(self.cfg.beta2));
        let bc1 = F::one() - b1.powi(self.t as i32);
        let bc2 = F::one() - b2.powi(self.t as i32);
        let lr = F::of(self.cfg.lr);
        let eps = F::of(self.cfg.eps);
        for i in 0..params.len() {
            let g = grads[i] * scale;
            self.m[i] = b1 * self.m[i] + (F::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (F::one() - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Adam::<f64>::new(
            AdamConfig {
                lr: 0.05,
                clip_norm: None,
                ..AdamConfig::default()
            },
            2,
        );
        let mut p = vec![3.0, -2.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn first_step_is_lr_sized_even_when_clipped() {
        let mut opt = Adam::<f32>::new(AdamConfig::default(), 1);
        let mut p = vec![0.0_f32];
        let norm = opt.step(&mut p, &[100.0]);
        assert_eq!(norm, 100.0);
        assert!((p[0] + 3e-4).abs() < 1e-6);
    }
}
