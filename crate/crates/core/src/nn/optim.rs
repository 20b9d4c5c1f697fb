use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    Sgd {
        lr: f64,
    },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::adam(1e-3)
    }
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Adam { lr, .. } | OptimizerKind::Sgd { lr } => lr,
        }
    }
}

/// First-order optimizer over a fixed list of parameter slices.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Scalar> Optimizer<T> {
    /// `sizes` lists the length of every parameter slice, in the order they
    /// will be passed to [`Optimizer::step`].
    pub fn new(kind: OptimizerKind, sizes: &[usize]) -> Self {
        let moments = || match kind {
            OptimizerKind::Adam { .. } => sizes.iter().map(|&n| vec![T::ZERO; n]).collect(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Optimizer {
            kind,
            first: moments(),
            second: moments(),
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Invalid(format!(
                "{} parameter slices but {} gradient slices",
                params.len(),
                grads.len()
            )));
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                let lr = T::from_f64(lr);
                for (p, g) in params.into_iter().zip(grads) {
                    for (w, &d) in p.iter_mut().zip(g) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                if params.len() != self.first.len() {
                    return Err(Error::Invalid(format!(
                        "optimizer built for {} slices, stepped with {}",
                        self.first.len(),
                        params.len()
                    )));
                }
                let t = self.steps as i32;
                let step_size = lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
                let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
                let (c1, c2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
                let (alpha, eps) = (T::from_f64(step_size), T::from_f64(eps));
                for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    if m.len() != p.len() || g.len() != p.len() {
                        return Err(Error::Invalid(format!(
                            "parameter slice {i} has {} entries, gradient {}, moments {}",
                            p.len(),
                            g.len(),
                            m.len()
                        )));
                    }
                    for j in 0..p.len() {
                        let d = g[j];
                        m[j] = b1 * m[j] + c1 * d;
                        v[j] = b2 * v[j] + c2 * d * d;
                        p[j] -= alpha * m[j] / (v[j].sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_zero_rate_is_noop() {
        let mut opt = Optimizer::<f32>::new(OptimizerKind::Sgd { lr: 0.0 }, &[2]);
        let mut p = vec![1.0, -2.0];
        opt.step(vec![&mut p], vec![&[5.0, 5.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // With bias correction, step one moves each weight by lr * sign(g).
        let mut opt = Optimizer::<f64>::new(OptimizerKind::adam(0.01), &[2]);
        let mut p = vec![0.0, 0.0];
        opt.step(vec![&mut p], vec![&[3.0, -0.5]]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-8);
        assert!((p[1] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut opt = Optimizer::<f64>::new(OptimizerKind::adam(0.05), &[1]);
        let mut p = vec![3.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            opt.step(vec![&mut p], vec![&g]).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }
}
