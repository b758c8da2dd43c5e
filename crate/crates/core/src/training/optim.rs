//! Learning-rate schedule, SGD with momentum, early stopping.

use serde::{Deserialize, Serialize};

use crate::model::{Grads, Network};
use crate::scalar::Scalar;

pub const POLY_EXPONENT: f64 = 0.9;

/// `lr0 * (1 - epoch / epochs_max)^0.9`, clamped to zero past the end.
pub fn poly_lr(epoch: usize, epochs_max: usize, lr0: f64) -> f64 {
    if epochs_max == 0 || epoch >= epochs_max {
        return 0.0;
    }
    lr0 * (1.0 - epoch as f64 / epochs_max as f64).powf(POLY_EXPONENT)
}

/// Heavy-ball SGD with weight decay added to the gradient:
/// `v = momentum * v + (g + wd * w)`, `w -= lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<S> {
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Grads<S>,
}

impl<S: Scalar> Sgd<S> {
    pub fn new(net: &Network<S>, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: net.zero_grads(),
        }
    }

    pub fn step(&mut self, net: &mut Network<S>, grads: &Grads<S>, lr: f64) {
        let (mu, wd, lr) = (S::of(self.momentum), S::of(self.weight_decay), S::of(lr));
        for ((p, g), v) in net.params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((w, &gi), vi) in p.value.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = mu * *vi + gi + wd * *w;
                *w -= lr * *vi;
            }
        }
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm<S: Scalar>(grads: &mut Grads<S>, max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(|v| v.as_f64().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = S::of(max_norm / norm);
        grads.iter_mut().flatten().for_each(|v| *v *= s);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stops once `patience` epochs have passed without strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub goal: Goal,
    pub best: Option<f64>,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, goal: Goal) -> Self {
        Self {
            patience,
            goal,
            best: None,
            best_epoch: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, value: f64) -> Verdict {
        let better = match (self.best, self.goal) {
            (None, _) => !value.is_nan(),
            (Some(b), Goal::Minimize) => value < b,
            (Some(b), Goal::Maximize) => value > b,
        };
        if better {
            self.best = Some(value);
            self.best_epoch = epoch;
            Verdict::Improved
        } else if epoch >= self.best_epoch + self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }
}
