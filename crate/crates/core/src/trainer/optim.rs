//! First-order optimizers over flat parameter buffers. The trainer
//! concatenates every trainable tensor into one `Vec<f64>`, so the
//! optimizers here never need to know about tensor shapes.

use serde::{Deserialize, Serialize};

use crate::config::OptimizerKind;
use crate::error::{DiscoError, Result};

const MOMENTUM: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer state. Slot buffers live here; parameters live with the
/// caller and are updated in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    updates: u64,
    /// Momentum / first-moment buffer.
    m: Vec<f64>,
    /// Second-moment buffer (adaptive_moment only; empty for sgd_momentum).
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, dim: usize) -> Self {
        let v = match kind {
            OptimizerKind::AdaptiveMoment => vec![0.0; dim],
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Optimizer { kind, learning_rate, updates: 0, m: vec![0.0; dim], v }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Apply one update step: `params -= lr * direction(grads)`.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(DiscoError::Input(format!(
                "optimizer dimension mismatch: state {}, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.updates += 1;
        match self.kind {
            OptimizerKind::SgdMomentum => {
                for i in 0..params.len() {
                    self.m[i] = MOMENTUM * self.m[i] + grads[i];
                    params[i] -= self.learning_rate * self.m[i];
                }
            }
            OptimizerKind::AdaptiveMoment => {
                let t = self.updates as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for i in 0..params.len() {
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grads[i];
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimize f(x) = sum x_i^2 from x = (3, -2); both optimizers should
    /// reach the origin.
    fn run(kind: OptimizerKind, lr: f64, steps: usize) -> Vec<f64> {
        let mut x = vec![3.0, -2.0];
        let mut opt = Optimizer::new(kind, lr, 2);
        for _ in 0..steps {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.apply(&mut x, &g).unwrap();
        }
        x
    }

    #[test]
    fn sgd_momentum_converges_on_quadratic() {
        let x = run(OptimizerKind::SgdMomentum, 0.02, 400);
        assert!(x.iter().all(|v| v.abs() < 1e-6), "{x:?}");
    }

    #[test]
    fn adaptive_moment_converges_on_quadratic() {
        let x = run(OptimizerKind::AdaptiveMoment, 0.05, 2000);
        assert!(x.iter().all(|v| v.abs() < 1e-6), "{x:?}");
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        for kind in [OptimizerKind::SgdMomentum, OptimizerKind::AdaptiveMoment] {
            let mut x = vec![1.5, -0.25, 7.0];
            let before = x.clone();
            let mut opt = Optimizer::new(kind, 0.0, 3);
            opt.apply(&mut x, &[1.0, -4.0, 0.5]).unwrap();
            opt.apply(&mut x, &[2.0, 1.0, -9.0]).unwrap();
            assert_eq!(x, before);
        }
    }

    #[test]
    fn first_adam_step_is_signed_learning_rate() {
        // With bias correction, step 1 moves each coordinate by
        // lr * g / (|g| + eps'), i.e. almost exactly lr * sign(g).
        let mut x = vec![0.0, 0.0];
        let mut opt = Optimizer::new(OptimizerKind::AdaptiveMoment, 0.1, 2);
        opt.apply(&mut x, &[5.0, -0.003]).unwrap();
        assert!((x[0] + 0.1).abs() < 1e-6, "{}", x[0]);
        assert!((x[1] - 0.1).abs() < 1e-4, "{}", x[1]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum, 0.1, 2);
        let mut x = vec![0.0, 0.0, 0.0];
        assert!(opt.apply(&mut x, &[1.0, 2.0, 3.0]).is_err());
    }
}
