use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::bail;
use crate::math::{argmax, log_softmax, softmax};
use crate::rng::gumbel;
use crate::Result;

/// How the `N` basis vectors of a block are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SamplingMode {
    /// `N` independent draws; collisions yield fewer than `N` kept weights.
    #[default]
    WithReplacement,
    /// Sequential Gumbel top-k over one noise vector; always `min(N, M)` distinct picks.
    WithoutReplacement,
}

/// Basis logits `θ_i` of one block. Positions at or beyond `valid` are
/// padding and carry zero probability.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLogits {
    pub theta: Vec<f64>,
    pub valid: usize,
}

impl BlockLogits {
    pub fn new(theta: Vec<f64>) -> Self {
        let valid = theta.len();
        Self { theta, valid }
    }

    pub fn with_padding(theta: Vec<f64>, valid: usize) -> Self {
        debug_assert!(valid >= 1 && valid <= theta.len());
        Self { theta, valid }
    }

    /// `π̃ = softmax(θ)` over the real positions.
    pub fn probs(&self) -> Vec<f64> {
        let mut p = softmax(&self.theta[..self.valid]);
        p.resize(self.theta.len(), 0.0);
        p
    }

    /// `log π̃ = θ − logsumexp(θ)` over the real positions.
    pub fn log_probs(&self) -> Vec<f64> {
        log_softmax(&self.theta[..self.valid])
    }
}

/// Hard and relaxed samples of one block's `N` basis draws, sharing noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBasis {
    pub block_size: usize,
    /// Selected position of each draw (`y_{i,k}` as an index).
    pub hard: Vec<usize>,
    /// Relaxed `ỹ_{i,k}`, draw-major, `hard.len() × block_size`.
    pub soft: Vec<f64>,
    pub temperature: f64,
}

impl SampledBasis {
    pub fn draws(&self) -> usize {
        self.hard.len()
    }

    pub fn soft_draw(&self, k: usize) -> &[f64] {
        &self.soft[k * self.block_size..(k + 1) * self.block_size]
    }

    pub fn hard_vectors(&self) -> Vec<Vec<f64>> {
        self.hard
            .iter()
            .map(|&s| {
                let mut v = vec![0.0; self.block_size];
                v[s] = 1.0;
                v
            })
            .collect()
    }

    pub fn soft_vectors(&self) -> Vec<Vec<f64>> {
        (0..self.draws()).map(|k| self.soft_draw(k).to_vec()).collect()
    }

    /// `⊕_k y_{i,k}` as bits.
    pub fn mask_bits(&self) -> Vec<u8> {
        let mut bits = vec![0u8; self.block_size];
        for &s in &self.hard {
            bits[s] = 1;
        }
        bits
    }

    /// Pull a gradient w.r.t. the composed block mask back to the logits,
    /// through the probabilistic sum at the hard point and the straight-through
    /// Gumbel-Softmax. Adds into `theta_grad`.
    pub fn pullback_mask_grad(&self, mask_grad: &[f64], theta_grad: &mut [f64]) {
        let m = self.block_size;
        for k in 0..self.draws() {
            let soft = self.soft_draw(k);
            // a_{k,s} = g_s · Π_{j≠k}(1 − y_{j,s}); zero where another draw also picked s.
            let a = |s: usize| {
                let blocked = self.hard.iter().enumerate().any(|(j, &h)| j != k && h == s);
                if blocked {
                    0.0
                } else {
                    mask_grad[s]
                }
            };
            let dot: f64 = (0..m).map(|s| soft[s] * a(s)).sum();
            for (s, g) in theta_grad.iter_mut().enumerate().take(m) {
                *g += soft[s] * (a(s) - dot) / self.temperature;
            }
        }
    }
}

/// Draw one block's basis vectors into `out`, reusing its buffers.
pub fn draw_block<R: Rng + ?Sized>(
    theta: &[f64],
    valid: usize,
    n_draws: usize,
    tau: f64,
    mode: SamplingMode,
    rng: &mut R,
    out: &mut SampledBasis,
) -> Result<()> {
    if !(tau > 0.0) {
        bail!(Domain, "temperature must be positive, got {}", tau);
    }
    if valid == 0 || valid > theta.len() {
        bail!(Dimension, "block has {} real positions out of {}", valid, theta.len());
    }
    let m = theta.len();
    let log_p = log_softmax(&theta[..valid]);
    out.block_size = m;
    out.temperature = tau;
    out.hard.clear();
    out.soft.clear();
    let mut z = vec![0.0; valid];
    let mut soft = Vec::with_capacity(valid);
    match mode {
        SamplingMode::WithReplacement => {
            for _ in 0..n_draws {
                for (zs, lp) in z.iter_mut().zip(&log_p) {
                    *zs = lp + gumbel(rng);
                }
                out.hard.push(argmax(&z));
                crate::math::softmax_into(&z, tau, &mut soft);
                out.soft.extend_from_slice(&soft);
                out.soft.resize(out.soft.len() + (m - valid), 0.0);
            }
        }
        SamplingMode::WithoutReplacement => {
            for (zs, lp) in z.iter_mut().zip(&log_p) {
                *zs = lp + gumbel(rng);
            }
            let mut avail = z.clone();
            for _ in 0..n_draws.min(valid) {
                let pick = argmax(&avail);
                crate::math::softmax_into(&avail, tau, &mut soft);
                out.hard.push(pick);
                out.soft.extend_from_slice(&soft);
                out.soft.resize(out.soft.len() + (m - valid), 0.0);
                avail[pick] = f64::NEG_INFINITY;
            }
        }
    }
    Ok(())
}

/// Draw `n_draws` basis vectors from `softmax(θ)` with the Gumbel-Max trick
/// (hard one-hots) and the tempered Gumbel-Softmax (relaxed vectors) from the
/// same noise. Every draw uses fresh noise.
pub fn gumbel_draw<R: Rng + ?Sized>(
    logits: &BlockLogits,
    n_draws: usize,
    tau: f64,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<SampledBasis> {
    let mut out = SampledBasis { block_size: logits.theta.len(), hard: Vec::new(), soft: Vec::new(), temperature: tau };
    draw_block(&logits.theta, logits.valid, n_draws, tau, mode, rng, &mut out)?;
    Ok(out)
}

/// `ŷ = ỹ − stopgrad(ỹ − y)`: forward value of the hard sample, gradient of
/// the relaxation.
#[derive(Debug, Clone, Copy)]
pub struct StraightThrough<'a> {
    sample: &'a SampledBasis,
}

pub fn straight_through(sample: &SampledBasis) -> StraightThrough<'_> {
    StraightThrough { sample }
}

impl StraightThrough<'_> {
    /// The forward value, equal to the hard one-hots.
    pub fn forward(&self) -> Vec<Vec<f64>> {
        // ỹ − (ỹ − y) is not bit-exact in floating point, so emit y directly.
        self.sample.hard_vectors()
    }

    /// Map `∂L/∂ŷ_k` to `∂L/∂θ` through the Gumbel-Softmax Jacobian.
    pub fn backward(&self, upstream: &[Vec<f64>]) -> Result<Vec<f64>> {
        let s = self.sample;
        if upstream.len() != s.draws() || upstream.iter().any(|u| u.len() != s.block_size) {
            bail!(Dimension, "upstream gradient must be {} x {}", s.draws(), s.block_size);
        }
        let mut grad = vec![0.0; s.block_size];
        for (k, up) in upstream.iter().enumerate() {
            let soft = s.soft_draw(k);
            let dot: f64 = soft.iter().zip(up).map(|(a, b)| a * b).sum();
            for m in 0..s.block_size {
                grad[m] += soft[m] * (up[m] - dot) / s.temperature;
            }
        }
        Ok(grad)
    }
}
