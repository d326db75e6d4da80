use alloc::vec::Vec;

use crate::eid::EligibilityCredits;
use crate::mask::{MaskConfig, SampledBasis, TensorMask};
use crate::metrics::SparsitySnapshot;
use crate::optim::Optimizer;
use crate::snn::Network;

/// Where a run stands. Pruning happens between `Search` and `Finetune`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Search,
    Finetune,
    Done,
}

impl Phase {
    pub fn as_u8(self) -> u8 {
        match self {
            Phase::Search => 0,
            Phase::Finetune => 1,
            Phase::Done => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Phase::Search),
            1 => Some(Phase::Finetune),
            2 => Some(Phase::Done),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ReportPhase {
    Search,
    Prune,
    Finetune,
}

/// One record per epoch (and one for the prune step).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseReport {
    pub phase: ReportPhase,
    /// 1-based within the phase; 0 for prune.
    pub epoch: usize,
    /// Training epochs completed so far over the whole run.
    pub global_epoch: usize,
    pub task_loss: f64,
    /// Search only.
    pub eid_loss: Option<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Search only: the temperature used throughout the epoch.
    pub tau: Option<f64>,
    pub lr: f64,
    pub sparsity: SparsitySnapshot,
}

/// Everything needed to continue a run bit-for-bit.
///
/// Random draws are keyed by `(seed, global_step, epoch, index)`, so the
/// counters stand in for generator state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub config_hash: u64,
    pub seed: u64,
    pub phase: Phase,
    /// Epochs completed in the current phase.
    pub epoch: usize,
    pub global_step: u64,
    pub net: Network,
    /// Tiling of each weight tensor, forward order; `None` stays dense.
    pub layout: Vec<Option<MaskConfig>>,
    /// Flat block-major logits per maskable tensor.
    pub logits: Vec<Option<Vec<f64>>>,
    pub credits: Vec<Option<EligibilityCredits>>,
    pub optimizer: Optimizer,
    /// Hard and relaxed draws of the latest search step, per block.
    pub last_samples: Vec<Option<Vec<SampledBasis>>>,
    /// Frozen after pruning.
    pub masks: Vec<Option<TensorMask>>,
}

impl TrainerState {
    pub fn is_pruned(&self) -> bool {
        self.phase != Phase::Search
    }

    /// Training epochs completed across phases.
    pub fn global_epoch(&self, epochs_search: usize) -> usize {
        match self.phase {
            Phase::Search => self.epoch,
            Phase::Finetune | Phase::Done => epochs_search + self.epoch,
        }
    }
}
