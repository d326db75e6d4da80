//! Sparsity and synaptic-operation accounting.
//!
//! Masks are given per weight tensor in forward order (hidden layers, then
//! the readout); `None` marks a tensor exempt from pruning. Retention counts
//! only maskable tensors.
//!
//! SOPs follow the usual spikes × surviving-synapses tally:
//! `Σ_layers Σ_t Σ_j x_t^j · fanout_j`, where `fanout_j` is the number of
//! nonzero effective weights leaving presynaptic neuron `j`, averaged over
//! samples and reported in millions. The readout is included.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::mask::TensorMask;
use crate::snn::{forward_network, ForwardOutput, LayerWeights, Network, SpikeFn};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerSparsity {
    pub maskable: bool,
    pub kept_weights: usize,
    pub total_weights: usize,
    pub sops: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SparsitySnapshot {
    pub weight_retained_pct: f64,
    pub conn_retained_pct: f64,
    pub sops_millions: f64,
    pub per_layer: Vec<LayerSparsity>,
}

fn check_layout(net: &Network, masks: &[Option<TensorMask>]) -> Result<()> {
    let layers = net.hidden.len() + 1;
    if !masks.is_empty() && masks.len() != layers {
        bail!(Dimension, "{} tensor masks for {} weight tensors", masks.len(), layers);
    }
    for (w, m) in net.layers().zip(masks) {
        if let Some(m) = m {
            if m.cfg.rows != w.rows || m.cfg.cols != w.cols {
                bail!(Dimension, "mask tiles {}x{}, tensor is {}x{}", m.cfg.rows, m.cfg.cols, w.rows, w.cols);
            }
        }
    }
    Ok(())
}

/// `M ⊙ W` for every masked tensor, the rest unchanged.
pub fn masked_network(net: &Network, masks: &[Option<TensorMask>]) -> Result<Network> {
    check_layout(net, masks)?;
    let mut out = net.clone();
    for (l, m) in masks.iter().enumerate() {
        if let Some(m) = m {
            let w = if l < out.hidden.len() { &mut out.hidden[l] } else { &mut out.readout };
            *w = m.apply(w)?;
        }
    }
    Ok(out)
}

fn nonzero(w: &LayerWeights) -> usize {
    w.values.iter().filter(|v| **v != 0.0).count()
}

fn retention(net: &Network, masks: &[Option<TensorMask>]) -> Result<f64> {
    let eff = masked_network(net, masks)?;
    let maskable: Vec<bool> = if masks.iter().any(Option::is_some) {
        masks.iter().map(Option::is_some).collect()
    } else {
        // Dense model: every tensor counts.
        vec![true; net.hidden.len() + 1]
    };
    let (mut kept, mut total) = (0usize, 0usize);
    for (w, &m) in eff.layers().zip(&maskable) {
        if m {
            kept += nonzero(w);
            total += w.values.len();
        }
    }
    Ok(if total == 0 { 100.0 } else { 100.0 * kept as f64 / total as f64 })
}

/// Nonzero effective maskable weights over all maskable weights, in percent.
pub fn weight_retention(net: &Network, masks: &[Option<TensorMask>]) -> Result<f64> {
    retention(net, masks)
}

/// Surviving synapses over all synapses of the maskable tensors, in percent.
/// With weight-only pruning a synapse survives exactly when its weight does.
pub fn connectivity_retention(net: &Network, masks: &[Option<TensorMask>]) -> Result<f64> {
    retention(net, masks)
}

/// Surviving fan-out of every presynaptic neuron.
pub fn fan_out(w: &LayerWeights) -> Vec<usize> {
    let mut out = vec![0usize; w.cols];
    for r in 0..w.rows {
        for (j, v) in w.row(r).iter().enumerate() {
            if *v != 0.0 {
                out[j] += 1;
            }
        }
    }
    out
}

/// Add one sample's SOPs per tensor into `out`.
pub fn add_forward_sops(fwd: &ForwardOutput, fan_outs: &[Vec<usize>], out: &mut [f64]) {
    let inputs = fwd.traces.iter().map(|t| t.inputs.as_slice()).chain(core::iter::once(fwd.readout_inputs.as_slice()));
    for ((steps, fo), acc) in inputs.zip(fan_outs).zip(out.iter_mut()) {
        for x in steps {
            *acc += x.iter().zip(fo).map(|(s, &f)| s * f as f64).sum::<f64>();
        }
    }
}

/// Batch-averaged SOPs per tensor (raw counts, not millions).
pub fn sops_per_layer(net: &Network, masks: &[Option<TensorMask>], samples: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    let eff = masked_network(net, masks)?;
    let fan_outs: Vec<Vec<usize>> = eff.layers().map(fan_out).collect();
    let mut totals = vec![0.0; fan_outs.len()];
    for input in samples {
        let fwd = forward_network(&eff, input, SpikeFn::Hard)?;
        add_forward_sops(&fwd, &fan_outs, &mut totals);
    }
    if !samples.is_empty() {
        let n = samples.len() as f64;
        totals.iter_mut().for_each(|v| *v /= n);
    }
    Ok(totals)
}

/// Batch-averaged synaptic operations, in millions.
pub fn count_sops(net: &Network, masks: &[Option<TensorMask>], samples: &[Vec<Vec<f64>>]) -> Result<f64> {
    Ok(sops_per_layer(net, masks, samples)?.iter().sum::<f64>() / 1e6)
}

pub fn snapshot(net: &Network, masks: &[Option<TensorMask>], samples: &[Vec<Vec<f64>>]) -> Result<SparsitySnapshot> {
    let sops = sops_per_layer(net, masks, samples)?;
    snapshot_from_counts(net, masks, &sops)
}

/// Snapshot from already tallied per-tensor SOPs.
pub fn snapshot_from_counts(net: &Network, masks: &[Option<TensorMask>], sops: &[f64]) -> Result<SparsitySnapshot> {
    let eff = masked_network(net, masks)?;
    let any_mask = masks.iter().any(Option::is_some);
    let per_layer = eff
        .layers()
        .enumerate()
        .map(|(l, w)| LayerSparsity {
            maskable: !any_mask || masks[l].is_some(),
            kept_weights: nonzero(w),
            total_weights: w.values.len(),
            sops: sops.get(l).copied().unwrap_or(0.0),
        })
        .collect();
    Ok(SparsitySnapshot {
        weight_retained_pct: weight_retention(net, masks)?,
        conn_retained_pct: connectivity_retention(net, masks)?,
        sops_millions: sops.iter().sum::<f64>() / 1e6,
        per_layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{HardMask, MaskConfig};
    use crate::rng::{bernoulli, substream, Stream};
    use crate::snn::LifParams;

    fn net_from(hidden: Vec<LayerWeights>, readout: LayerWeights) -> Network {
        Network::new(hidden, readout, LifParams::default(), 0.5).unwrap()
    }

    fn ones_net(sizes: &[usize]) -> Network {
        let hidden = sizes
            .windows(2)
            .take(sizes.len() - 2)
            .map(|p| LayerWeights::from_vec(p[1], p[0], vec![1.0; p[0] * p[1]]).unwrap())
            .collect();
        let n = sizes.len();
        let readout =
            LayerWeights::from_vec(sizes[n - 1], sizes[n - 2], vec![1.0; sizes[n - 1] * sizes[n - 2]]).unwrap();
        net_from(hidden, readout)
    }

    fn mask(cfg: MaskConfig, blocks: &[&[u8]]) -> TensorMask {
        TensorMask::new(cfg, blocks.iter().map(|b| HardMask { bits: b.to_vec() }).collect()).unwrap()
    }

    #[test]
    fn distinct_two_of_four_keeps_half() {
        let net = ones_net(&[8, 4, 3]);
        let cfg = MaskConfig::for_layer(2, 4, 4, 8).unwrap();
        let blocks: Vec<&[u8]> =
            (0..8).map(|b| if b % 2 == 0 { &[1u8, 1, 0, 0][..] } else { &[0u8, 1, 0, 1][..] }).collect();
        let masks = vec![Some(mask(cfg, &blocks)), None];
        assert_eq!(weight_retention(&net, &masks).unwrap(), 50.0);
        assert_eq!(connectivity_retention(&net, &masks).unwrap(), 50.0);
    }

    #[test]
    fn collision_example_reads_three_eighths() {
        // Two 2:4 blocks: distinct draws {0, 2}, then a collision {1, 1}.
        let net = ones_net(&[8, 1, 2]);
        let cfg = MaskConfig::for_layer(2, 4, 1, 8).unwrap();
        let masks = vec![Some(mask(cfg, &[&[1, 0, 1, 0], &[0, 1, 0, 0]])), None];
        assert_eq!(weight_retention(&net, &masks).unwrap(), 37.5);
    }

    #[test]
    fn all_ones_mask_keeps_everything() {
        let net = ones_net(&[6, 5, 2]);
        let cfg = MaskConfig::for_layer(2, 4, 5, 6).unwrap();
        let masks = vec![Some(TensorMask::ones(cfg)), None];
        assert_eq!(connectivity_retention(&net, &masks).unwrap(), 100.0);
        assert_eq!(weight_retention(&net, &[]).unwrap(), 100.0);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let net = ones_net(&[6, 5, 2]);
        let cfg = MaskConfig::for_layer(2, 4, 5, 8).unwrap();
        assert!(weight_retention(&net, &[Some(TensorMask::ones(cfg)), None]).is_err());
        assert!(weight_retention(&net, &[None]).is_err());
    }

    #[test]
    fn zero_input_gives_zero_sops() {
        let net = ones_net(&[4, 3, 2]);
        let samples = vec![vec![vec![0.0; 4]; 5]];
        assert_eq!(count_sops(&net, &[], &samples).unwrap(), 0.0);
    }

    #[test]
    fn hand_counted_raster() {
        // Zero hidden weights silence the hidden layer, so only the input layer
        // contributes: input 0 fires twice, input 2 once; fan-outs 2, 1, 0, 2.
        let w = LayerWeights::from_vec(2, 4, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let readout = LayerWeights::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let mut net = net_from(vec![w], readout);
        net.lif.v_threshold = 1e9;
        let raster = vec![vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 1.0, 0.0], vec![0.0; 4]];
        let per = sops_per_layer(&net, &[], &[raster]).unwrap();
        assert_eq!(per, vec![2.0 * 2.0 + 0.0, 0.0]);

        net.lif.v_threshold = 0.5;
        let raster = vec![vec![1.0, 0.0, 0.0, 1.0]];
        // Both hidden neurons cross threshold (inputs 2 and 3), readout fan-out 1 each.
        let per = sops_per_layer(&net, &[], &[raster]).unwrap();
        assert_eq!(per, vec![2.0 + 2.0, 2.0]);
    }

    #[test]
    fn halving_fan_out_halves_sops() {
        let mut rng = substream(1, Stream::Encode, &[]);
        let raster: Vec<Vec<f64>> =
            (0..6).map(|_| (0..8).map(|_| if bernoulli(&mut rng, 0.4) { 1.0 } else { 0.0 }).collect()).collect();
        let mut net = ones_net(&[8, 4, 2]);
        net.lif.v_threshold = 1e9;
        let full = sops_per_layer(&net, &[], std::slice::from_ref(&raster)).unwrap()[0];
        let cfg_b = MaskConfig::for_layer(2, 4, 4, 8).unwrap();
        let blocks_b: Vec<&[u8]> =
            (0..8).map(|b| if b % 4 < 2 { &[1u8, 1, 0, 0][..] } else { &[0u8, 0, 1, 1][..] }).collect();
        // Every input keeps exactly 2 of its 4 outgoing synapses.
        let masks = vec![Some(mask(cfg_b, &blocks_b)), None];
        let half = sops_per_layer(&net, &masks, &[raster]).unwrap()[0];
        assert!(full > 0.0);
        assert_eq!(half * 2.0, full);
    }

    #[test]
    fn removing_mask_bits_never_increases_anything() {
        let mut rng = substream(9, Stream::Init, &[]);
        let net = Network::init(8, &[6], 3, LifParams::default(), 0.5, &mut rng).unwrap();
        let raster: Vec<Vec<f64>> =
            (0..5).map(|_| (0..8).map(|_| if bernoulli(&mut rng, 0.5) { 1.0 } else { 0.0 }).collect()).collect();
        let cfg = MaskConfig::for_layer(4, 4, 6, 8).unwrap();
        let mut m = TensorMask::ones(cfg);
        let mut prev = snapshot(&net, &[Some(m.clone()), None], std::slice::from_ref(&raster)).unwrap();
        for b in 0..cfg.num_blocks {
            for s in 0..3 {
                m.blocks[b].bits[s] = 0;
                let next = snapshot(&net, &[Some(m.clone()), None], std::slice::from_ref(&raster)).unwrap();
                assert!(next.weight_retained_pct <= prev.weight_retained_pct);
                assert!(next.conn_retained_pct <= prev.conn_retained_pct);
                // Input-layer SOPs are monotone; deeper layers depend on spiking.
                assert!(next.per_layer[0].sops <= prev.per_layer[0].sops);
                prev = next;
            }
        }
    }
}
