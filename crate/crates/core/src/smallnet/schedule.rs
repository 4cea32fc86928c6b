use serde::{Deserialize, Serialize};

use super::NetError;

/// Optimizer and step-schedule recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Epochs at which the rate is divided by `factor`.
    pub milestones: Vec<usize>,
    pub factor: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub seed: u64,
    /// Loader threads; results do not depend on this.
    pub workers: usize,
}

impl TrainConfig {
    /// 200 epochs, batch 128, lr 0.1 divided by 5 after epochs 60, 120, 160,
    /// Nesterov momentum 0.9, weight decay 5e-4.
    pub fn cifar() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            lr0: 0.1,
            milestones: vec![60, 120, 160],
            factor: 5.0,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 5e-4,
            seed: 0,
            workers: 1,
        }
    }

    /// 160 epochs, lr 0.01 divided by 10 after epochs 80 and 120.
    pub fn svhn() -> Self {
        Self { epochs: 160, lr0: 0.01, milestones: vec![80, 120], factor: 10.0, ..Self::cifar() }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.factor > 1.0) {
            return bad(format!("factor must exceed 1, got {}", self.factor));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("milestones must be strictly increasing: {:?}", self.milestones));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be finite and non-negative, got {}", self.lr0));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be finite and non-negative, got {}", self.weight_decay));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }
}

/// `lr0 / factor^k` where `k` counts milestones at or before `epoch`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    let passed = cfg.milestones.iter().filter(|&&m| m <= epoch).count();
    cfg.lr0 / cfg.factor.powi(passed as i32)
}
