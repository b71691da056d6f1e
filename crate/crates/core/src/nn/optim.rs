use serde::{Deserialize, Serialize};

use super::net::Gradients;
use super::real::Real;
use crate::error::{Error, Result};

pub const DEFAULT_CLIP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }

    /// One bias-corrected update of `params` against `grads`.
    pub fn update(&mut self, params: Vec<&mut [T]>, grads: &Gradients<T>) -> Result<()> {
        if params.len() != self.m.len() || grads.0.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "Adam tracks {} tensors, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grads.0.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(&grads.0).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Shape(
                    "parameter/gradient/moment sizes differ".into(),
                ));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let step_size = T::lit(c.lr / bc1);
        let inv_sqrt_bc2 = T::lit(1.0 / bc2.sqrt());
        let eps = T::lit(c.eps);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                p[i] = p[i] - step_size * m[i] / ((v[i]).sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their global L2 norm is at most `threshold`. Returns the
/// norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut Gradients<T>, threshold: f64) -> Result<f64> {
    if grads.0.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let norm = grads.global_norm();
    if norm > threshold {
        grads.scale(T::lit(threshold / norm));
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(v: Vec<Vec<f64>>) -> Gradients<f64> {
        Gradients(v)
    }

    #[test]
    fn clipping_rescales_only_large_norms() {
        let mut g = grads(vec![vec![120.0], vec![160.0]]);
        assert_eq!(clip_gradients(&mut g, 100.0).unwrap(), 200.0);
        assert!((g.global_norm() - 100.0).abs() < 1e-12);
        assert_eq!(g.0, vec![vec![60.0], vec![80.0]]);
        let mut small = grads(vec![vec![30.0, 40.0]]);
        clip_gradients(&mut small, 100.0).unwrap();
        assert_eq!(small.0, vec![vec![30.0, 40.0]]);
    }

    #[test]
    fn clipping_rejects_non_finite() {
        let mut g = grads(vec![vec![1.0, f64::INFINITY]]);
        assert!(matches!(
            clip_gradients(&mut g, 100.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::<f64>::new(AdamConfig::default(), &[3]);
        let mut p = vec![1.0, -2.0, 3.0];
        adam.update(vec![&mut p], &grads(vec![vec![0.0; 3]]))
            .unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut adam = AdamState::<f64>::new(AdamConfig::default(), &[3]);
        let mut p = vec![0.0; 3];
        adam.update(vec![&mut p], &grads(vec![vec![2.5, -0.01, 40.0]]))
            .unwrap();
        let lr = 5e-5;
        for (d, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!(d * sign > 0.0);
            assert!((lr * 0.999..=lr).contains(&d.abs()), "{d}");
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut adam = AdamState::<f64>::new(AdamConfig::default(), &[1]);
        let mut p = vec![0.0];
        // Scalar oracle: with constant g the bias-corrected moments are exactly
        // g and g^2, so each step moves by lr * g / (|g| + eps).
        let g = 0.3;
        let mut last = 0.0;
        for k in 1..=100 {
            adam.update(vec![&mut p], &grads(vec![vec![g]])).unwrap();
            assert!(p[0] < last);
            last = p[0];
            let want = -(k as f64) * 5e-5 * g / (g + 1e-8);
            assert!((p[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = AdamState::<f64>::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        assert!(matches!(
            adam.update(vec![&mut p], &grads(vec![vec![0.0; 3]])),
            Err(Error::Shape(_))
        ));
    }
}
