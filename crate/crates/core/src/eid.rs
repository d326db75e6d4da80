//! Eligibility-inspired distillation.
//!
//! Per-weight credits `C_ij = Σ_t |δ_t^i x_t^j|` are the temporally
//! accumulated magnitudes of the per-step STBP gradients. Within each N:M
//! block they become a soft target `q_i = softmax(C_i / τ_q)`, and the block
//! categorical `π̃_i = softmax(θ_i)` is pulled towards it by
//! `(1/B) Σ_i KL(q_i ‖ π̃_i)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::mask::{BlockLogits, MaskConfig};
use crate::math::{exp, log, log_softmax, softmax_into};
use crate::snn::{BackwardState, TemporalTrace};
use crate::{Error, Result};

/// Running eligibility credits for one maskable weight tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityCredits {
    pub rows: usize,
    pub cols: usize,
    pub per_weight: Vec<f64>,
    pub ema_decay: f64,
    pub step_count: u64,
}

impl EligibilityCredits {
    pub fn new(rows: usize, cols: usize, ema_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ema_decay) {
            bail!(Domain, "ema_decay must lie in [0, 1), got {}", ema_decay);
        }
        Ok(Self { rows, cols, per_weight: vec![0.0; rows * cols], ema_decay, step_count: 0 })
    }

    /// `C ← d·C + (1 − d)·c_batch`.
    pub fn update(&mut self, batch_credit: &[f64]) -> Result<()> {
        if batch_credit.len() != self.per_weight.len() {
            bail!(Dimension, "batch credit has {} entries, tensor has {}", batch_credit.len(), self.per_weight.len());
        }
        let d = self.ema_decay;
        for (c, &b) in self.per_weight.iter_mut().zip(batch_credit) {
            *c = d * *c + (1.0 - d) * b;
            if !(*c >= 0.0) {
                return Err(Error::Invariant(alloc::format!("credit became {}", c)));
            }
        }
        self.step_count += 1;
        Ok(())
    }
}

/// `Σ_t |g_t|` over per-step weight gradients.
pub fn batch_credit(per_step_grads: &[Vec<f64>]) -> Vec<f64> {
    let len = per_step_grads.first().map_or(0, Vec::len);
    let mut out = vec![0.0; len];
    for g in per_step_grads {
        for (o, v) in out.iter_mut().zip(g) {
            *o += v.abs();
        }
    }
    out
}

/// Fold one batch of per-step gradients into the running credits.
pub fn accumulate_credits(credits: &EligibilityCredits, per_step_grads: &[Vec<f64>]) -> Result<EligibilityCredits> {
    let mut next = credits.clone();
    next.update(&batch_credit(per_step_grads))?;
    Ok(next)
}

/// Add `Σ_t |δ_t| |x_t|ᵀ` for one sample into `out` (row-major), without
/// materializing the per-step gradients.
pub fn add_credit_from_backward(bs: &BackwardState, trace: &TemporalTrace, scale: f64, out: &mut [f64]) {
    let cols = trace.inputs.first().map_or(0, Vec::len);
    for (delta, x) in bs.membrane_errors.iter().zip(&trace.inputs) {
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let xa = xj.abs() * scale;
            for (i, &d) in delta.iter().enumerate() {
                out[i * cols + j] += d.abs() * xa;
            }
        }
    }
}

/// How block credits are rescaled before the tempered softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CreditNormalization {
    /// Divide each block by its largest credit (when positive).
    #[default]
    BlockMax,
    None,
}

/// Blockwise soft targets `q_i`, flat and block-major like the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTargets {
    pub block_size: usize,
    pub valid: Vec<usize>,
    pub q: Vec<f64>,
    pub tau_q: f64,
}

impl BlockTargets {
    pub fn num_blocks(&self) -> usize {
        self.valid.len()
    }

    pub fn block(&self, b: usize) -> &[f64] {
        &self.q[b * self.block_size..(b + 1) * self.block_size]
    }

    /// Append another tensor's targets (same block size).
    pub fn extend(&mut self, other: &BlockTargets) {
        debug_assert_eq!(self.block_size, other.block_size);
        self.valid.extend_from_slice(&other.valid);
        self.q.extend_from_slice(&other.q);
    }
}

/// `q_{i,s} = softmax_s(C_{i,s}/τ_q)` over the real positions of every block.
pub fn block_targets(
    credits: &EligibilityCredits,
    cfg: &MaskConfig,
    tau_q: f64,
    normalization: CreditNormalization,
) -> Result<BlockTargets> {
    if !(tau_q > 0.0) {
        bail!(Domain, "tau_q must be positive, got {}", tau_q);
    }
    if credits.rows != cfg.rows || credits.cols != cfg.cols {
        bail!(Dimension, "credits are {}x{}, mask tiles {}x{}", credits.rows, credits.cols, cfg.rows, cfg.cols);
    }
    let m = cfg.block_size;
    let mut q = vec![0.0; cfg.num_blocks * m];
    let mut valid = Vec::with_capacity(cfg.num_blocks);
    let mut c = Vec::with_capacity(m);
    let mut p = Vec::with_capacity(m);
    for b in 0..cfg.num_blocks {
        let (r, c0) = cfg.block_origin(b);
        let n = cfg.valid_len(b);
        c.clear();
        c.extend_from_slice(&credits.per_weight[r * cfg.cols + c0..r * cfg.cols + c0 + n]);
        if normalization == CreditNormalization::BlockMax {
            let max = c.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                c.iter_mut().for_each(|v| *v /= max);
            }
        }
        softmax_into(&c, tau_q, &mut p);
        q[b * m..b * m + n].copy_from_slice(&p);
        valid.push(n);
    }
    Ok(BlockTargets { block_size: m, valid, q, tau_q })
}

/// Value and logit gradient of the distillation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EidLoss {
    pub loss: f64,
    /// `∂/∂θ_{i,s} = (π̃_{i,s} − q_{i,s})/B`, laid out like the logits.
    pub grad: Vec<f64>,
}

/// `(1/B) Σ_i Σ_s q_{i,s} log(q_{i,s}/π̃_{i,s})` over flat block-major logits.
pub fn eid_loss_flat(targets: &BlockTargets, logits: &[f64]) -> Result<EidLoss> {
    let m = targets.block_size;
    let blocks = targets.num_blocks();
    if logits.len() != blocks * m {
        bail!(Dimension, "{} logits for {} blocks of {}", logits.len(), blocks, m);
    }
    if blocks == 0 {
        return Ok(EidLoss { loss: 0.0, grad: Vec::new() });
    }
    let scale = 1.0 / blocks as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for b in 0..blocks {
        let n = targets.valid[b];
        let theta = &logits[b * m..b * m + n];
        let q = &targets.q[b * m..b * m + n];
        let log_pi = log_softmax(theta);
        for s in 0..n {
            if q[s] > 0.0 {
                loss += q[s] * (log(q[s]) - log_pi[s]);
            }
            grad[b * m + s] = (exp(log_pi[s]) - q[s]) * scale;
        }
    }
    Ok(EidLoss { loss: loss * scale, grad })
}

/// [`eid_loss_flat`] over a list of per-block logits.
pub fn eid_loss(targets: &BlockTargets, logits: &[BlockLogits]) -> Result<EidLoss> {
    if logits.len() != targets.num_blocks() {
        bail!(Dimension, "{} logit blocks for {} target blocks", logits.len(), targets.num_blocks());
    }
    let mut flat = Vec::with_capacity(logits.len() * targets.block_size);
    for (b, l) in logits.iter().enumerate() {
        if l.theta.len() != targets.block_size || l.valid != targets.valid[b] {
            bail!(Dimension, "block {} logits do not match the target layout", b);
        }
        flat.extend_from_slice(&l.theta);
    }
    eid_loss_flat(targets, &flat)
}
