//! First-order optimizers over flat parameter tensors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::math::{cos, pow, sqrt};
use crate::Result;

/// Which learning rate a tensor follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Weights,
    Logits,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum OptimizerConfig {
    Adam {
        lr: f64,
        /// Learning rate for mask logits; defaults to `lr`.
        #[cfg_attr(feature = "serde", serde(default))]
        logit_lr: Option<f64>,
        #[cfg_attr(feature = "serde", serde(default = "default_beta1"))]
        beta1: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_beta2"))]
        beta2: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_eps"))]
        eps: f64,
    },
    SgdMomentum {
        lr: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        logit_lr: Option<f64>,
        momentum: f64,
    },
}

#[cfg(feature = "serde")]
fn default_beta1() -> f64 {
    0.9
}
#[cfg(feature = "serde")]
fn default_beta2() -> f64 {
    0.999
}
#[cfg(feature = "serde")]
fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam { lr: 1e-3, logit_lr: None, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn lr(&self, group: ParamGroup) -> f64 {
        let (lr, logit_lr) = match *self {
            OptimizerConfig::Adam { lr, logit_lr, .. } => (lr, logit_lr),
            OptimizerConfig::SgdMomentum { lr, logit_lr, .. } => (lr, logit_lr),
        };
        match group {
            ParamGroup::Weights => lr,
            ParamGroup::Logits => logit_lr.unwrap_or(lr),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.lr(ParamGroup::Weights)) || !pos(self.lr(ParamGroup::Logits)) {
            bail!(Config, "learning rates must be positive and finite");
        }
        match *self {
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    bail!(Config, "adam betas must lie in [0, 1), got {} and {}", beta1, beta2);
                }
                if !pos(eps) {
                    bail!(Config, "adam eps must be positive, got {}", eps);
                }
            }
            OptimizerConfig::SgdMomentum { momentum, .. } => {
                if !(0.0..1.0).contains(&momentum) {
                    bail!(Config, "momentum must lie in [0, 1), got {}", momentum);
                }
            }
        }
        Ok(())
    }
}

/// Optimizer moments for one tensor. SGD keeps its velocity in `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub group: ParamGroup,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step: u64,
    pub params: Vec<ParamState>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, layout: &[(ParamGroup, usize)]) -> Result<Self> {
        config.validate()?;
        let params =
            layout.iter().map(|&(group, len)| ParamState { group, m: vec![0.0; len], v: vec![0.0; len] }).collect();
        Ok(Self { config, step: 0, params })
    }

    /// One update of every tensor; learning rates are multiplied by `lr_scale`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr_scale: f64) -> Result<()> {
        if params.len() != self.params.len() || grads.len() != self.params.len() {
            bail!(
                Dimension,
                "optimizer holds {} tensors, got {} params / {} grads",
                self.params.len(),
                params.len(),
                grads.len()
            );
        }
        for ((p, g), s) in params.iter().zip(grads).zip(&self.params) {
            if p.len() != s.m.len() || g.len() != s.m.len() {
                bail!(Dimension, "tensor of {} entries given {} params / {} grads", s.m.len(), p.len(), g.len());
            }
        }
        self.step += 1;
        let t = self.step as f64;
        match self.config {
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => {
                let c1 = 1.0 - pow(beta1, t);
                let c2 = 1.0 - pow(beta2, t);
                for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.params) {
                    let lr = self.config.lr(s.group) * lr_scale;
                    for k in 0..p.len() {
                        s.m[k] = beta1 * s.m[k] + (1.0 - beta1) * g[k];
                        s.v[k] = beta2 * s.v[k] + (1.0 - beta2) * g[k] * g[k];
                        let m_hat = s.m[k] / c1;
                        let v_hat = s.v[k] / c2;
                        p[k] -= lr * m_hat / (sqrt(v_hat) + eps);
                    }
                }
            }
            OptimizerConfig::SgdMomentum { momentum, .. } => {
                for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.params) {
                    let lr = self.config.lr(s.group) * lr_scale;
                    for k in 0..p.len() {
                        s.m[k] = momentum * s.m[k] + g[k];
                        p[k] -= lr * s.m[k];
                    }
                }
            }
        }
        Ok(())
    }
}

/// Cosine decay multiplier: 1 at `epoch = 0`, 0 at `epoch = total`.
pub fn cosine_scale(epoch: usize, total: usize) -> f64 {
    if total == 0 {
        return 1.0;
    }
    let frac = (epoch.min(total)) as f64 / total as f64;
    0.5 * (1.0 + cos(core::f64::consts::PI * frac))
}
