use super::config::OptimizerKind;
use crate::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_RHO: f64 = 0.9;

/// Moment buffers shaped like the parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, sizes: &[usize]) -> Self {
        let zeros = || sizes.iter().map(|&n| vec![T::zero(); n]).collect::<Vec<_>>();
        Self {
            kind,
            step: 0,
            first: if kind == OptimizerKind::Adam { zeros() } else { Vec::new() },
            second: if kind == OptimizerKind::Sgd { Vec::new() } else { zeros() },
        }
    }

    /// One update of `params` against `grads`.
    pub fn apply(&mut self, params: &mut [Vec<T>], grads: &[Vec<T>], lr: f64) {
        self.step += 1;
        let lr = T::of(lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pi, &gi) in p.iter_mut().zip(g) {
                        *pi -= lr * gi;
                    }
                }
            }
            OptimizerKind::Rmsprop => {
                let rho = T::of(RMSPROP_RHO);
                let eps = T::of(ADAM_EPS);
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.second) {
                    for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *vi = rho * *vi + (T::one() - rho) * gi * gi;
                        *pi -= lr * gi / (vi.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
                let eps = T::of(ADAM_EPS);
                let t = self.step as i32;
                let c1 = T::one() - T::of(ADAM_BETA1.powi(t));
                let c2 = T::one() - T::of(ADAM_BETA2.powi(t));
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((pi, &gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = b1 * *mi + (T::one() - b1) * gi;
                        *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                        *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}
