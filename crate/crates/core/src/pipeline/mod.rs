//! Search, prune and finetune.
//!
//! Search trains weights and block logits jointly on `L_task + λ·L_EID`, with
//! masks resampled every mini-batch and the temperature annealed per epoch.
//! Prune freezes the last hard draws. Finetune trains only the surviving
//! weights under the frozen masks.

mod config;
mod executor;
mod state;
mod trainer;

pub use config::{AnnealSettings, MaskSettings, ModelSettings, PruneSource, RunConfig, TrainMode};
pub use executor::{BatchExecutor, Sequential};
pub use state::{Phase, PhaseReport, ReportPhase, TrainerState};
pub use trainer::{Evaluation, SearchStep, Trainer};
