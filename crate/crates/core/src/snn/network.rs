use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::backward::{stbp_backward, BackwardState};
use super::layer::{LayerState, LayerWeights, SpikeFn, TemporalTrace};
use super::neuron::LifParams;
use crate::error::bail;
use crate::math::{logsumexp, softmax};
use crate::Result;

/// A stack of LIF layers followed by a non-spiking leaky-integrator readout.
///
/// The readout membrane `v_t = β·v_{t-1} + W_out·s_t` is read as the class
/// logits of step `t`; the prediction uses `mean_t v_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub hidden: Vec<LayerWeights>,
    pub readout: LayerWeights,
    pub lif: LifParams,
    pub readout_leak: f64,
}

impl Network {
    pub fn new(hidden: Vec<LayerWeights>, readout: LayerWeights, lif: LifParams, readout_leak: f64) -> Result<Self> {
        lif.validate()?;
        if !(0.0..=1.0).contains(&readout_leak) {
            bail!(Domain, "readout_leak must lie in [0, 1], got {}", readout_leak);
        }
        for pair in hidden.windows(2) {
            if pair[1].cols != pair[0].rows {
                bail!(Dimension, "layer with {} outputs feeds a layer expecting {}", pair[0].rows, pair[1].cols);
            }
        }
        if let Some(last) = hidden.last() {
            if readout.cols != last.rows {
                bail!(Dimension, "readout expects {} inputs, last hidden layer has {}", readout.cols, last.rows);
            }
        }
        Ok(Self { hidden, readout, lif, readout_leak })
    }

    /// Random initialization, `U(±1/sqrt(fan_in))` for every layer.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_sizes: &[usize],
        num_classes: usize,
        lif: LifParams,
        readout_leak: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut fan_in = input_dim;
        for &h in hidden_sizes {
            hidden.push(LayerWeights::init_uniform(h, fan_in, rng));
            fan_in = h;
        }
        let readout = LayerWeights::init_uniform(num_classes, fan_in, rng);
        Self::new(hidden, readout, lif, readout_leak)
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().unwrap_or(&self.readout).cols
    }

    pub fn num_classes(&self) -> usize {
        self.readout.rows
    }

    /// Every weight matrix in forward order, readout last.
    pub fn layers(&self) -> impl Iterator<Item = &LayerWeights> {
        self.hidden.iter().chain(core::iter::once(&self.readout))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Readout membrane per step, used as per-step logits.
    pub step_logits: Vec<Vec<f64>>,
    /// Time-averaged readout, the class scores.
    pub scores: Vec<f64>,
    /// One trace per hidden layer.
    pub traces: Vec<TemporalTrace>,
    /// Activity entering the readout at each step.
    pub readout_inputs: Vec<Vec<f64>>,
}

impl ForwardOutput {
    pub fn prediction(&self) -> usize {
        crate::math::argmax(&self.scores)
    }
}

/// Simulate the network over `input.len()` steps.
pub fn forward_network(net: &Network, input: &[Vec<f64>], spike_fn: SpikeFn) -> Result<ForwardOutput> {
    if input.is_empty() {
        bail!(Dimension, "input must contain at least one time step");
    }
    let classes = net.num_classes();
    let mut states: Vec<LayerState> = net.hidden.iter().map(|w| LayerState::new(w.rows)).collect();
    let mut traces = vec![TemporalTrace::default(); net.hidden.len()];
    let mut readout_v = vec![0.0; classes];
    let mut step_logits = Vec::with_capacity(input.len());
    let mut readout_inputs = Vec::with_capacity(input.len());
    let mut drive = Vec::with_capacity(classes);

    for (t, x) in input.iter().enumerate() {
        if x.len() != net.input_dim() {
            bail!(Dimension, "step {} has {} inputs, network expects {}", t, x.len(), net.input_dim());
        }
        for (l, w) in net.hidden.iter().enumerate() {
            let (below, rest) = states.split_at_mut(l);
            let layer_input = below.last().map_or(x.as_slice(), |s| s.spikes.as_slice());
            rest[0].advance(layer_input, w, &net.lif, spike_fn, Some(&mut traces[l]))?;
        }
        let current = states.last().map_or(x.as_slice(), |s| s.spikes.as_slice());
        net.readout.matvec_into(current, &mut drive);
        for (v, d) in readout_v.iter_mut().zip(&drive) {
            *v = net.readout_leak * *v + d;
        }
        readout_inputs.push(current.to_vec());
        step_logits.push(readout_v.clone());
    }

    let steps = input.len() as f64;
    let mut scores = vec![0.0; classes];
    for logits in &step_logits {
        for (s, v) in scores.iter_mut().zip(logits) {
            *s += v / steps;
        }
    }
    Ok(ForwardOutput { step_logits, scores, traces, readout_inputs })
}

/// `Σ_t CE(softmax(v_t), label)`.
pub fn cross_entropy(step_logits: &[Vec<f64>], label: usize) -> f64 {
    step_logits.iter().map(|v| logsumexp(v) - v[label]).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub hidden: Vec<BackwardState>,
    pub readout_grad: Vec<f64>,
    /// `∂L/∂v_t` of the readout membrane at every step.
    pub readout_errors: Vec<Vec<f64>>,
    pub loss: f64,
}

/// Gradient of [`cross_entropy`] w.r.t. every weight, through the readout and
/// STBP for each hidden layer.
pub fn backward_network(net: &Network, fwd: &ForwardOutput, label: usize) -> Result<NetworkGrads> {
    let classes = net.num_classes();
    if label >= classes {
        bail!(Domain, "label {} out of range for {} classes", label, classes);
    }
    let steps = fwd.step_logits.len();
    let cols = net.readout.cols;
    let mut readout_grad = vec![0.0; classes * cols];
    let mut top_errors = vec![Vec::new(); steps];
    let mut readout_errors = vec![Vec::new(); steps];
    let mut carry = vec![0.0; classes];
    for t in (0..steps).rev() {
        let mut dv = softmax(&fwd.step_logits[t]);
        dv[label] -= 1.0;
        for (d, c) in dv.iter_mut().zip(&carry) {
            *d += net.readout_leak * c;
        }
        for (j, &s) in fwd.readout_inputs[t].iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for (i, &d) in dv.iter().enumerate() {
                readout_grad[i * cols + j] += d * s;
            }
        }
        if !net.hidden.is_empty() {
            net.readout.transpose_matvec_into(&dv, &mut top_errors[t]);
        }
        readout_errors[t] = dv.clone();
        carry = dv;
    }

    let mut hidden: Vec<BackwardState> = Vec::with_capacity(net.hidden.len());
    let mut errors = top_errors;
    for (l, w) in net.hidden.iter().enumerate().rev() {
        let bs = stbp_backward(&fwd.traces[l], &errors, w, &net.lif)?;
        errors = if l > 0 { bs.input_errors.clone() } else { Vec::new() };
        hidden.push(bs);
    }
    hidden.reverse();
    Ok(NetworkGrads { hidden, readout_grad, readout_errors, loss: cross_entropy(&fwd.step_logits, label) })
}
