use serde::{Deserialize, Serialize};

use crate::data::augment::AugmentParams;
use crate::error::{Error, Result};
use crate::ssltasks::DEFAULT_MIXUP_ALPHA;

/// Optimizer protocol and loop settings shared by pretraining and
/// fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub initial_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Optimizer steps per epoch.
    pub iterations_per_epoch: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Labeled patients used for fine-tuning; `None` uses every labeled one.
    pub labeled_budget: Option<usize>,
    pub mixup: bool,
    pub mixup_alpha: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    /// Fixed proxy samples scored for validation during pretraining.
    pub val_samples: usize,
    pub augment: AugmentParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 200,
            initial_lr: 1e-2,
            momentum: 0.99,
            weight_decay: 3e-5,
            batch_size: 1,
            iterations_per_epoch: 50,
            early_stop_patience: 50,
            seed: 0,
            labeled_budget: None,
            mixup: false,
            mixup_alpha: DEFAULT_MIXUP_ALPHA,
            grad_clip: 12.0,
            val_samples: 32,
            augment: AugmentParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |f: &str, r: &str| Err(Error::config(format!("training.{f}"), r));
        if self.epochs_max == 0 {
            return fail("epochs_max", "must be at least 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return fail("initial_lr", "must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum", "must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 {
            return fail("weight_decay", "must be non-negative");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1");
        }
        if self.iterations_per_epoch == 0 {
            return fail("iterations_per_epoch", "must be at least 1");
        }
        if self.early_stop_patience == 0 {
            return fail("early_stop_patience", "must be at least 1");
        }
        if self.mixup && self.mixup_alpha <= 0.0 {
            return fail("mixup_alpha", "must be positive");
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return fail("grad_clip", "must be finite and non-negative");
        }
        if self.val_samples == 0 {
            return fail("val_samples", "must be at least 1");
        }
        Ok(())
    }
}
