use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::{Grads, Params};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

/// Moment estimates for every parameter array, with bias-corrected updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Params<T>, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .entries()
                .iter()
                .map(|e| vec![T::zero(); e.data.len()])
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, params: &mut Params<T>, grads: &Grads<T>) -> Result<()> {
        if grads.values.len() != params.len()
            || params
                .entries()
                .iter()
                .zip(&grads.values)
                .any(|(p, g)| p.data.len() != g.len())
            || self.m.len() != params.len()
        {
            return Err(Error::shape("optimizer state, parameters, and gradients disagree"));
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let step_size = T::lit(c.lr / bc1);
        let inv_sqrt_bc2 = T::lit(1.0 / bc2.sqrt());
        let eps = T::lit(c.eps);

        for (((p, g), m), v) in params
            .entries_mut()
            .iter_mut()
            .zip(&grads.values)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &gi), mi), vi) in p.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                *w -= step_size * *mi / (vi.sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Params<f64>, Grads<f64>) {
        let mut p = Params::new();
        p.add("w", vec![3], vec![1.0, -2.0, 0.5]);
        let g = Grads::zeros_like(&p);
        (p, g)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, g) = setup();
        let before = p.clone();
        let mut s = AdamState::new(&p, AdamConfig::default());
        s.step(&mut p, &g).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let (mut p, mut g) = setup();
        g.values[0] = vec![0.3, -5.0, 1e3];
        let mut s = AdamState::new(&p, AdamConfig::default());
        s.step(&mut p, &g).unwrap();
        // m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
        let expect = [1.0 - 1e-3 * 0.3 / (0.3 + 1e-8), -2.0 + 1e-3 * 5.0 / (5.0 + 1e-8), 0.5 - 1e-3];
        for (a, b) in p.entries()[0].data.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn steps_are_reproducible() {
        let run = || {
            let (mut p, mut g) = setup();
            g.values[0] = vec![0.1, 0.2, -0.3];
            let mut s = AdamState::new(&p, AdamConfig::default());
            s.step(&mut p, &g).unwrap();
            s.step(&mut p, &g).unwrap();
            p.entries()[0].data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut p, _) = setup();
        let mut other = Params::new();
        other.add("w", vec![2], vec![0.0, 0.0]);
        let g = Grads::zeros_like(&other);
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(s.step(&mut p, &g).is_err());
    }
}
