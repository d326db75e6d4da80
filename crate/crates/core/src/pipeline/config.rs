use alloc::vec;
use alloc::vec::Vec;

use crate::data::SpikeDatasetSpec;
use crate::eid::CreditNormalization;
use crate::error::bail;
use crate::mask::{AnnealSchedule, MaskConfig, SamplingMode, MAX_BLOCK_SIZE};
use crate::optim::OptimizerConfig;
use crate::snn::LifParams;
use crate::Result;

/// Whether a run learns N:M masks or trains the dense model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TrainMode {
    #[default]
    Spikenm,
    Dense,
}

/// Where the frozen masks come from at the prune step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PruneSource {
    /// Hard draws of the final search batch.
    #[default]
    LastSample,
    /// The `N` largest logits of each block.
    Argmax,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MaskSettings {
    pub n_keep: usize,
    pub block_size: usize,
    pub sampling: SamplingMode,
    pub prune_source: PruneSource,
    /// Also mask the readout tensor.
    pub prune_readout: bool,
}

impl Default for MaskSettings {
    fn default() -> Self {
        Self {
            n_keep: 2,
            block_size: 4,
            sampling: SamplingMode::WithReplacement,
            prune_source: PruneSource::LastSample,
            prune_readout: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AnnealSettings {
    pub tau_max: f64,
    pub tau_min: f64,
}

impl Default for AnnealSettings {
    fn default() -> Self {
        Self { tau_max: 1.0, tau_min: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelSettings {
    pub hidden: Vec<usize>,
    /// Leak `β` of the readout integrator.
    pub readout_leak: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self { hidden: vec![64], readout_leak: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RunConfig {
    pub seed: u64,
    pub mode: TrainMode,
    pub epochs_search: usize,
    pub epochs_finetune: usize,
    /// When set, must equal `epochs_search + epochs_finetune`.
    pub total_epochs: Option<usize>,
    pub batch_size: usize,
    pub eid_lambda: f64,
    pub tau_q: f64,
    pub eid_ema_decay: f64,
    pub credit_normalization: CreditNormalization,
    pub model: ModelSettings,
    pub lif: LifParams,
    pub mask: MaskSettings,
    pub anneal: AnnealSettings,
    pub optimizer: OptimizerConfig,
    pub dataset: SpikeDatasetSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: TrainMode::Spikenm,
            epochs_search: 5,
            epochs_finetune: 15,
            total_epochs: None,
            batch_size: 32,
            eid_lambda: 5.0,
            tau_q: 1.0,
            eid_ema_decay: 0.9,
            credit_normalization: CreditNormalization::BlockMax,
            model: ModelSettings::default(),
            lif: LifParams::default(),
            mask: MaskSettings::default(),
            anneal: AnnealSettings::default(),
            optimizer: OptimizerConfig::default(),
            dataset: SpikeDatasetSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(total) = self.total_epochs {
            if total != self.epochs_search + self.epochs_finetune {
                bail!(
                    Config,
                    "total_epochs = {} but epochs_search + epochs_finetune = {}",
                    total,
                    self.epochs_search + self.epochs_finetune
                );
            }
        }
        if self.batch_size == 0 {
            bail!(Config, "batch_size must be at least 1");
        }
        if !(self.eid_lambda >= 0.0 && self.eid_lambda.is_finite()) {
            bail!(Config, "eid_lambda must be finite and >= 0, got {}", self.eid_lambda);
        }
        if !(self.tau_q > 0.0 && self.tau_q.is_finite()) {
            bail!(Config, "tau_q must be positive, got {}", self.tau_q);
        }
        if !(0.0..1.0).contains(&self.eid_ema_decay) {
            bail!(Config, "eid_ema_decay must lie in [0, 1), got {}", self.eid_ema_decay);
        }
        if self.model.hidden.contains(&0) {
            bail!(Config, "model.hidden sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.model.readout_leak) {
            bail!(Config, "model.readout_leak must lie in [0, 1], got {}", self.model.readout_leak);
        }
        let m = &self.mask;
        if m.block_size == 0 || m.block_size > MAX_BLOCK_SIZE {
            bail!(Config, "mask.block_size must lie in 1..={}, got {}", MAX_BLOCK_SIZE, m.block_size);
        }
        if m.n_keep == 0 || m.n_keep > m.block_size {
            bail!(Config, "mask.n_keep must lie in 1..={}, got {}", m.block_size, m.n_keep);
        }
        if self.mode == TrainMode::Spikenm && self.model.hidden.is_empty() && !m.prune_readout {
            bail!(Config, "nothing to mask: no hidden layers and mask.prune_readout = false");
        }
        self.anneal_schedule().map_err(|e| crate::Error::Config(alloc::format!("anneal: {}", e)))?;
        self.lif.validate().map_err(|e| crate::Error::Config(alloc::format!("lif: {}", e)))?;
        self.optimizer.validate()?;
        self.dataset.validate()?;
        Ok(())
    }

    pub fn anneal_schedule(&self) -> Result<AnnealSchedule> {
        AnnealSchedule::new(self.anneal.tau_max, self.anneal.tau_min, self.epochs_search)
    }

    pub fn total_budget(&self) -> usize {
        self.epochs_search + self.epochs_finetune
    }

    /// Mask tiling of every weight tensor (hidden layers, then readout);
    /// `None` for tensors that stay dense.
    pub fn mask_layout(&self, input_dim: usize, num_classes: usize) -> Result<Vec<Option<MaskConfig>>> {
        let mut out = Vec::with_capacity(self.model.hidden.len() + 1);
        let mut fan_in = input_dim;
        let masked = self.mode == TrainMode::Spikenm;
        for &h in &self.model.hidden {
            out.push(if masked {
                Some(MaskConfig::for_layer(self.mask.n_keep, self.mask.block_size, h, fan_in)?)
            } else {
                None
            });
            fan_in = h;
        }
        out.push(if masked && self.mask.prune_readout {
            Some(MaskConfig::for_layer(self.mask.n_keep, self.mask.block_size, num_classes, fan_in)?)
        } else {
            None
        });
        Ok(out)
    }
}
