use std::f64::consts::PI;

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Cosine,
    Constant,
}

/// SGD with momentum and coupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub total_steps: usize,
    pub schedule: Schedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            total_steps: 1,
            schedule: Schedule::Cosine,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("base_lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be at least 1"));
        }
        Ok(())
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        match self.schedule {
            Schedule::Cosine => cosine_lr(self, step),
            Schedule::Constant => Ok(self.base_lr),
        }
    }
}

/// Half-cosine decay from `base_lr` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(config: &OptimizerConfig, step: usize) -> Result<f64> {
    if step > config.total_steps {
        return Err(Error::precondition(format!(
            "step {step} beyond total_steps {}",
            config.total_steps
        )));
    }
    let progress = step as f64 / config.total_steps as f64;
    Ok(0.5 * config.base_lr * (1.0 + (PI * progress).cos()))
}

/// One update using the gradients currently held in `params`:
/// `v = momentum * v + grad + weight_decay * param; param -= lr(step) * v`.
pub fn sgd_step(params: &mut ParamStore, config: &OptimizerConfig, step_index: usize) -> Result<()> {
    let lr = config.lr(step_index)?;
    for (values, grads, velocity) in params.buffers_mut() {
        for ((p, g), v) in values.iter_mut().zip(grads).zip(velocity.iter_mut()) {
            *v = config.momentum * *v + g + config.weight_decay * *p;
            *p -= lr * *v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::Gradients;

    fn scalar_store(value: f64) -> ParamStore {
        let mut p = ParamStore::default();
        p.insert("x", 1, 1, vec![value]).unwrap();
        p
    }

    fn set_grad(p: &mut ParamStore, g: f64) {
        p.zero_grads();
        p.accumulate(&Gradients { slots: vec![vec![g]] }, 1.0).unwrap();
    }

    #[test]
    fn plain_sgd() {
        let cfg = OptimizerConfig {
            momentum: 0.0,
            weight_decay: 0.0,
            schedule: Schedule::Constant,
            ..OptimizerConfig::default()
        };
        let mut p = scalar_store(0.0);
        set_grad(&mut p, 1.0);
        sgd_step(&mut p, &cfg, 0).unwrap();
        assert_eq!(p.values()[0][0], -0.1);
    }

    #[test]
    fn two_momentum_steps() {
        let cfg = OptimizerConfig {
            base_lr: 1.0,
            momentum: 0.9,
            weight_decay: 0.0,
            total_steps: 2,
            schedule: Schedule::Constant,
        };
        let mut p = scalar_store(0.0);
        for step in 0..2 {
            set_grad(&mut p, 1.0);
            sgd_step(&mut p, &cfg, step).unwrap();
        }
        assert!((p.values()[0][0] + 2.9).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let cfg = OptimizerConfig { weight_decay: 0.0, total_steps: 10, ..OptimizerConfig::default() };
        let mut p = scalar_store(1.25);
        for step in 0..10 {
            sgd_step(&mut p, &cfg, step).unwrap();
        }
        assert_eq!(p.values()[0][0], 1.25);
    }

    #[test]
    fn cosine_points() {
        let cfg = OptimizerConfig { total_steps: 100, ..OptimizerConfig::default() };
        assert_eq!(cosine_lr(&cfg, 0).unwrap(), 0.1);
        assert_eq!(cosine_lr(&cfg, 50).unwrap(), 0.05);
        assert_eq!(cosine_lr(&cfg, 100).unwrap(), 0.0);
        assert!(matches!(cosine_lr(&cfg, 101), Err(Error::Precondition(_))));
    }

    #[test]
    fn validation() {
        let bad = OptimizerConfig { momentum: 1.0, ..OptimizerConfig::default() };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { total_steps: 0, ..OptimizerConfig::default() };
        assert!(bad.validate().is_err());
        assert!(OptimizerConfig::default().validate().is_ok());
    }
}
