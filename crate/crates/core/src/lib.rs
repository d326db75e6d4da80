//! Training core for N:M semi-structured sparse spiking neural networks.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure computation:
//! LIF dynamics with a hand-written surrogate-gradient backward pass, the N:M
//! mask machinery (probabilistic-sum algebra, basis logits, Gumbel sampling
//! with straight-through composition, temperature annealing), eligibility
//! credits with blockwise KL distillation, the search/prune/finetune trainer,
//! and sparsity metrics. File formats, configuration parsing and the CLI live
//! in the `spikenm` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod eid;
mod error;
pub mod mask;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod snn;

pub use error::{Error, Result};
