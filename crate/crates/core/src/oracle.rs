//! Independent reference computations used to check the engine.
//!
//! The simulators here are plain scalar loops over neurons and steps and share
//! no code with [`crate::snn`]. Each suite returns plain numbers; callers
//! decide how to report them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::eid::{eid_loss_flat, BlockTargets};
use crate::mask::{
    compose_mask, enumerate_mask_space, expected_loss_enumeration, gumbel_draw, straight_through,
    verify_representation, BlockLogits, HardMask, MaskConfig, SamplingMode,
};
use crate::math::{binomial, softmax};
use crate::rng::{bernoulli, substream, uniform, ChaCha8Rng, Stream};
use crate::snn::{backward_network, forward_network, LayerWeights, LifParams, Network, SpikeFn};
use crate::Result;

/// Reset gate and post-reset membrane recorded on a reference pass.
#[derive(Debug, Clone, Default)]
pub struct FrozenResets {
    /// `[layer][t][neuron] = (fired, ũ − V_th)`.
    pub steps: Vec<Vec<Vec<(bool, f64)>>>,
}

fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Scalar-loop simulation of the hidden stack and readout.
///
/// With `relaxed = false` spikes are `H(ũ − V_th)` and the membrane soft
/// resets. With `relaxed = true` spikes are `σ((ũ − V_th)/w)`; on steps where
/// the reference pass fired, the membrane is pinned to the recorded constant
/// instead of depending on `ũ`, which is the forward model whose exact
/// gradient is the STBP recursion. Returns `Σ_t CE(v_t, label)`, the class
/// scores, the hidden rasters and the resets seen.
pub fn reference_forward(
    net: &Network,
    input: &[Vec<f64>],
    label: usize,
    relaxed: bool,
    frozen: Option<&FrozenResets>,
) -> (f64, Vec<f64>, Vec<Vec<Vec<f64>>>, FrozenResets) {
    let p = &net.lif;
    let layers = net.hidden.len();
    let mut u: Vec<Vec<f64>> = net.hidden.iter().map(|w| vec![0.0; w.rows]).collect();
    let classes = net.readout.rows;
    let mut v = vec![0.0; classes];
    let mut scores = vec![0.0; classes];
    let mut loss = 0.0;
    let mut rasters = vec![Vec::new(); layers];
    let mut seen = FrozenResets { steps: vec![Vec::new(); layers] };
    for (t, x) in input.iter().enumerate() {
        let mut cur: Vec<f64> = x.clone();
        for l in 0..layers {
            let w = &net.hidden[l];
            let mut out = vec![0.0; w.rows];
            let mut resets = vec![(false, 0.0); w.rows];
            for i in 0..w.rows {
                let mut pre = p.leak_alpha * u[l][i];
                for j in 0..w.cols {
                    pre += w.values[i * w.cols + j] * cur[j];
                }
                let fired = pre >= p.v_threshold;
                out[i] = if relaxed {
                    sigma((pre - p.v_threshold) / p.surrogate_width)
                } else if fired {
                    1.0
                } else {
                    0.0
                };
                let (gate, c) = match frozen {
                    Some(f) => f.steps[l][t][i],
                    None => (fired, pre - p.v_threshold),
                };
                u[l][i] = match (relaxed, gate) {
                    (true, true) => c,
                    (_, true) => pre - p.v_threshold,
                    (_, false) => pre,
                };
                resets[i] = (fired, pre - p.v_threshold);
            }
            seen.steps[l].push(resets);
            rasters[l].push(out.clone());
            cur = out;
        }
        let w = &net.readout;
        for c in 0..classes {
            let mut drive = 0.0;
            for j in 0..w.cols {
                drive += w.values[c * w.cols + j] * cur[j];
            }
            v[c] = net.readout_leak * v[c] + drive;
        }
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(v.iter().map(|z| libm::exp(z - max)).sum::<f64>());
        loss += lse - v[label];
        for c in 0..classes {
            scores[c] += v[c] / input.len() as f64;
        }
    }
    (loss, scores, rasters, seen)
}

/// Shape and parameters of one random gradient-check instance.
#[derive(Debug, Clone)]
pub struct GradcheckCase {
    pub net: Network,
    pub input: Vec<Vec<f64>>,
    pub label: usize,
}

/// Random net with at most 8 neurons per layer and `T ≤ 5`. Surrogate widths
/// stay in `[0.5, 1]` so that central differences with `h = 1e-3` resolve the
/// curvature.
pub fn random_gradcheck_case(rng: &mut ChaCha8Rng) -> Result<GradcheckCase> {
    let depth = 1 + (uniform(rng, 0.0, 2.0) as usize);
    let input_dim = 2 + (uniform(rng, 0.0, 7.0) as usize);
    let mut sizes = vec![input_dim];
    for _ in 0..depth {
        sizes.push(1 + (uniform(rng, 0.0, 8.0) as usize));
    }
    let classes = 2 + (uniform(rng, 0.0, 3.0) as usize);
    let lif = LifParams {
        leak_alpha: uniform(rng, 0.3, 0.9),
        v_threshold: uniform(rng, 0.5, 1.5),
        surrogate_width: uniform(rng, 0.5, 1.0),
        ..LifParams::default()
    };
    let mut hidden = Vec::new();
    for pair in sizes.windows(2) {
        let vals = (0..pair[0] * pair[1]).map(|_| uniform(rng, -1.5, 1.5)).collect();
        hidden.push(LayerWeights::from_vec(pair[1], pair[0], vals)?);
    }
    let last = *sizes.last().unwrap_or(&input_dim);
    let readout =
        LayerWeights::from_vec(classes, last, (0..classes * last).map(|_| uniform(rng, -1.0, 1.0)).collect())?;
    let net = Network::new(hidden, readout, lif, uniform(rng, 0.0, 0.9))?;
    let steps = 1 + (uniform(rng, 0.0, 5.0) as usize);
    let input =
        (0..steps).map(|_| (0..input_dim).map(|_| if bernoulli(rng, 0.6) { 1.0 } else { 0.0 }).collect()).collect();
    let label = uniform(rng, 0.0, classes as f64) as usize;
    Ok(GradcheckCase { net, input, label })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub cases: usize,
    pub weights_checked: usize,
    /// Largest [`relative_error`] over every weight of every case.
    pub max_rel_error: f64,
    pub worst_case: usize,
}

/// `|a − f| / max(|a|, |f|, 1e-3)`: relative above 1e-3, absolute below, so
/// round-off on gradients that are exactly zero does not count.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// STBP on the relaxed network against central differences (step `h`) of
/// the scalar-loop reference with resets frozen at the reference pass.
pub fn gradcheck(case: &GradcheckCase, h: f64) -> Result<(f64, usize)> {
    let fwd = forward_network(&case.net, &case.input, SpikeFn::Relaxed)?;
    let grads = backward_network(&case.net, &fwd, case.label)?;
    let (_, _, _, frozen) = reference_forward(&case.net, &case.input, case.label, true, None);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let n_tensors = case.net.hidden.len() + 1;
    for l in 0..n_tensors {
        let analytic = if l < case.net.hidden.len() { &grads.hidden[l].weight_grad } else { &grads.readout_grad };
        for k in 0..analytic.len() {
            let eval = |delta: f64| {
                let mut net = case.net.clone();
                let w = if l < net.hidden.len() { &mut net.hidden[l] } else { &mut net.readout };
                w.values[k] += delta;
                reference_forward(&net, &case.input, case.label, true, Some(&frozen)).0
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max(relative_error(analytic[k], numeric));
            count += 1;
        }
    }
    Ok((worst, count))
}

pub fn gradcheck_suite(cases: usize, seed: u64, h: f64) -> Result<GradcheckReport> {
    let mut report = GradcheckReport { cases, weights_checked: 0, max_rel_error: 0.0, worst_case: 0 };
    for c in 0..cases {
        let mut rng = substream(seed, Stream::Init, &[0x6772_6164, c as u64]);
        let case = random_gradcheck_case(&mut rng)?;
        let (err, n) = gradcheck(&case, h)?;
        report.weights_checked += n;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_case = c;
        }
    }
    Ok(report)
}

/// Hard-spike rasters and loss of the engine against the scalar loop.
/// Returns `(rasters identical, |loss difference|)` over `cases` random nets.
pub fn lif_reference_suite(cases: usize, seed: u64) -> Result<(bool, f64)> {
    let mut same = true;
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let mut rng = substream(seed, Stream::Init, &[0x006c_6966, c as u64]);
        let case = random_gradcheck_case(&mut rng)?;
        let fwd = forward_network(&case.net, &case.input, SpikeFn::Hard)?;
        let (loss, scores, rasters, _) = reference_forward(&case.net, &case.input, case.label, false, None);
        for (trace, raster) in fwd.traces.iter().zip(&rasters) {
            same &= &trace.spikes == raster;
        }
        let engine = crate::snn::cross_entropy(&fwd.step_logits, case.label);
        worst = worst.max((engine - loss).abs());
        for (a, b) in fwd.scores.iter().zip(&scores) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((same, worst))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationCase {
    pub n_keep: usize,
    pub block_size: usize,
    pub cardinality: usize,
    /// `Σ_{k=1..N} C(M, k)`.
    pub expected: u64,
    pub composes_exactly: bool,
}

pub fn representation_suite(pairs: &[(usize, usize)]) -> Result<Vec<RepresentationCase>> {
    pairs
        .iter()
        .map(|&(n, m)| {
            let cfg = MaskConfig::new(n, m)?;
            let expected = (1..=n as u64).map(|k| binomial(m as u64, k)).sum();
            Ok(RepresentationCase {
                n_keep: n,
                block_size: m,
                cardinality: enumerate_mask_space(&cfg)?.len(),
                expected,
                composes_exactly: verify_representation(&cfg)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorCase {
    pub name: String,
    pub exact: f64,
    pub mc_mean: f64,
    pub std_error: f64,
    /// Every straight-through forward reproduced the hard-mask loss exactly.
    pub st_forward_exact: bool,
}

impl EstimatorCase {
    pub fn z_score(&self) -> f64 {
        if self.std_error == 0.0 {
            if self.mc_mean == self.exact {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mc_mean - self.exact).abs() / self.std_error
        }
    }
}

/// Readout-only network whose weight rows are masked block by block.
fn estimator_loss(weights: &[f64], rows: usize, cols: usize, input: &[Vec<f64>], label: usize, mask: &[f64]) -> f64 {
    let vals: Vec<f64> = weights.iter().zip(mask).map(|(w, m)| w * m).collect();
    let readout = LayerWeights::from_vec(rows, cols, vals).expect("shape");
    let net = Network::new(Vec::new(), readout, LifParams::default(), 0.5).expect("valid");
    let fwd = forward_network(&net, input, SpikeFn::Hard).expect("forward");
    crate::snn::cross_entropy(&fwd.step_logits, label)
}

/// Monte-Carlo mean of the sampled-mask loss against exact enumeration on
/// small instances, plus the straight-through forward identity.
pub fn estimator_suite(draws: usize, seed: u64) -> Result<Vec<EstimatorCase>> {
    let instances: [(&str, usize, usize, usize); 4] =
        [("1 block 1:4", 1, 1, 4), ("1 block 2:4", 1, 2, 4), ("2 blocks 2:4", 2, 2, 4), ("2 blocks 1:3", 2, 1, 3)];
    let mut out = Vec::new();
    for (case_idx, &(name, blocks, n, m)) in instances.iter().enumerate() {
        let mut rng = substream(seed, Stream::Logits, &[case_idx as u64]);
        let logits: Vec<BlockLogits> =
            (0..blocks).map(|_| BlockLogits::new((0..m).map(|_| uniform(&mut rng, -1.5, 1.5)).collect())).collect();
        // One readout row per block: `blocks` classes over `m` inputs, plus a
        // spare class so there are always at least two.
        let rows = blocks.max(2);
        let weights: Vec<f64> = (0..rows * m).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
        let input: Vec<Vec<f64>> =
            (0..3).map(|_| (0..m).map(|_| if bernoulli(&mut rng, 0.7) { 1.0 } else { 0.0 }).collect()).collect();
        let label = 0;
        let dense = |masks: &[Vec<f64>]| {
            let mut d = vec![1.0; rows * m];
            for (b, mk) in masks.iter().enumerate() {
                d[b * m..(b + 1) * m].copy_from_slice(mk);
            }
            d
        };
        let loss_of = |masks: &[HardMask]| {
            let mk: Vec<Vec<f64>> = masks.iter().map(|h| h.bits.iter().map(|&b| f64::from(b)).collect()).collect();
            estimator_loss(&weights, rows, m, &input, label, &dense(&mk))
        };
        let exact = expected_loss_enumeration(&logits, n, loss_of)?;

        let mut noise = substream(seed, Stream::MaskNoise, &[case_idx as u64]);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        let mut st_exact = true;
        for _ in 0..draws {
            let mut hard = Vec::with_capacity(blocks);
            let mut st = Vec::with_capacity(blocks);
            for l in &logits {
                let s = gumbel_draw(l, n, 1.0, SamplingMode::WithReplacement, &mut noise)?;
                hard.push(HardMask { bits: s.mask_bits() });
                st.push(compose_mask(&straight_through(&s).forward())?);
            }
            let loss = loss_of(&hard);
            st_exact &= estimator_loss(&weights, rows, m, &input, label, &dense(&st)).to_bits() == loss.to_bits();
            sum += loss;
            sum_sq += loss * loss;
        }
        let k = draws as f64;
        let mean = sum / k;
        let var = (sum_sq / k - mean * mean).max(0.0) * k / (k - 1.0).max(1.0);
        out.push(EstimatorCase {
            name: String::from(name),
            exact,
            mc_mean: mean,
            std_error: libm::sqrt(var / k),
            st_forward_exact: st_exact,
        });
    }
    Ok(out)
}

/// Category counts of `draws` single Gumbel-Max draws from `softmax(θ)`,
/// with the expected counts, for a goodness-of-fit test.
pub fn sampler_counts(theta: &[f64], draws: usize, seed: u64) -> Result<(Vec<u64>, Vec<f64>)> {
    let logits = BlockLogits::new(theta.to_vec());
    let mut rng = substream(seed, Stream::MaskNoise, &[0x0063_6869]);
    let mut counts = vec![0u64; theta.len()];
    for _ in 0..draws {
        let s = gumbel_draw(&logits, 1, 1.0, SamplingMode::WithReplacement, &mut rng)?;
        counts[s.hard[0]] += 1;
    }
    let expected = softmax(theta).iter().map(|p| p * draws as f64).collect();
    Ok((counts, expected))
}

/// Pearson statistic `Σ (O − E)² / E`.
pub fn chi_square_statistic(observed: &[u64], expected: &[f64]) -> f64 {
    observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e) * (o as f64 - e) / e).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EidReport {
    pub instances: usize,
    pub min_loss: f64,
    /// Largest loss seen when `q = π̃`.
    pub max_loss_at_match: f64,
    /// Smallest loss over instances where `q ≠ π̃`.
    pub min_loss_off_match: f64,
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_grad_error: f64,
}

/// KL sign, zero-at-match and gradient checks on random blocks.
pub fn eid_suite(instances: usize, seed: u64) -> Result<EidReport> {
    let mut rep = EidReport {
        instances,
        min_loss: f64::INFINITY,
        max_loss_at_match: 0.0,
        min_loss_off_match: f64::INFINITY,
        max_grad_error: 0.0,
    };
    for i in 0..instances {
        let mut rng = substream(seed, Stream::Logits, &[0x0065_6964, i as u64]);
        let blocks = 1 + (uniform(&mut rng, 0.0, 3.0) as usize);
        let m = 4;
        let theta: Vec<f64> = (0..blocks * m).map(|_| uniform(&mut rng, -3.0, 3.0)).collect();
        let mut q = Vec::new();
        for _ in 0..blocks {
            let z: Vec<f64> = (0..m).map(|_| uniform(&mut rng, -3.0, 3.0)).collect();
            q.extend(softmax(&z));
        }
        let targets = BlockTargets { block_size: m, valid: vec![m; blocks], q, tau_q: 1.0 };
        let out = eid_loss_flat(&targets, &theta)?;
        rep.min_loss = rep.min_loss.min(out.loss);
        rep.min_loss_off_match = rep.min_loss_off_match.min(out.loss);

        let matched_q: Vec<f64> = (0..blocks).flat_map(|b| softmax(&theta[b * m..(b + 1) * m])).collect();
        let matched = BlockTargets { q: matched_q, ..targets.clone() };
        rep.max_loss_at_match = rep.max_loss_at_match.max(eid_loss_flat(&matched, &theta)?.loss.abs());

        let h = 1e-5;
        for k in 0..theta.len() {
            let mut p = theta.clone();
            p[k] += h;
            let mut n = theta.clone();
            n[k] -= h;
            let fd = (eid_loss_flat(&targets, &p)?.loss - eid_loss_flat(&targets, &n)?.loss) / (2.0 * h);
            let err = (fd - out.grad[k]).abs() / fd.abs().max(out.grad[k].abs()).max(1e-3);
            rep.max_grad_error = rep.max_grad_error.max(err);
        }
    }
    Ok(rep)
}
