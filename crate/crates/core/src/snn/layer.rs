use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::neuron::LifParams;
use crate::error::bail;
use crate::{Error, Result};

/// Dense synaptic matrix, row-major: `values[i * cols + j]` is the weight from
/// presynaptic neuron `j` to postsynaptic neuron `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl LayerWeights {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            bail!(Dimension, "expected {}x{} = {} weights, got {}", rows, cols, rows * cols, values.len());
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            bail!(Numeric, "weight {} is not finite", pos);
        }
        Ok(Self { rows, cols, values })
    }

    /// Uniform initialization on `±1/sqrt(fan_in)`.
    pub fn init_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(cols.max(1) as f64);
        let values = (0..rows * cols).map(|_| crate::rng::uniform(rng, -bound, bound)).collect();
        Self { rows, cols, values }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `out = W·x`. Zero inputs are skipped, which makes binary spike vectors cheap.
    pub fn matvec_into(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.cols);
        out.clear();
        out.resize(self.rows, 0.0);
        let active: Vec<(usize, f64)> = x.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            *o = active.iter().map(|&(j, v)| row[j] * v).sum();
        }
    }

    /// `out = Wᵀ·d`.
    pub fn transpose_matvec_into(&self, d: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(d.len(), self.rows);
        out.clear();
        out.resize(self.cols, 0.0);
        for (i, &di) in d.iter().enumerate() {
            if di == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o += w * di;
            }
        }
    }
}

/// How a layer turns pre-reset membrane into its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeFn {
    /// Heaviside spikes; the network as trained and deployed.
    #[default]
    Hard,
    /// Sigmoid outputs with Heaviside reset gates. The reset path is treated
    /// as a constant on firing steps, so this network's exact gradient is the
    /// one the STBP recursion computes. Used by gradient checks.
    Relaxed,
}

/// Membrane and spike state of one layer after step `t - 1` (`t` steps taken).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub membrane: Vec<f64>,
    pub pre_reset: Vec<f64>,
    pub spikes: Vec<f64>,
    pub t: usize,
}

impl LayerState {
    pub fn new(neurons: usize) -> Self {
        Self { membrane: vec![0.0; neurons], pre_reset: vec![0.0; neurons], spikes: vec![0.0; neurons], t: 0 }
    }

    pub fn neurons(&self) -> usize {
        self.membrane.len()
    }

    /// Advance one time step in place, recording the step in `trace` when given.
    pub fn advance(
        &mut self,
        input: &[f64],
        weights: &LayerWeights,
        params: &LifParams,
        spike_fn: SpikeFn,
        trace: Option<&mut TemporalTrace>,
    ) -> Result<()> {
        if input.len() != weights.cols || self.neurons() != weights.rows {
            bail!(
                Dimension,
                "layer {}x{} cannot take {} inputs into {} neurons",
                weights.rows,
                weights.cols,
                input.len(),
                self.neurons()
            );
        }
        let mut drive = Vec::with_capacity(weights.rows);
        weights.matvec_into(input, &mut drive);
        let mut gates = match spike_fn {
            SpikeFn::Hard => None,
            SpikeFn::Relaxed => Some(vec![0.0; weights.rows]),
        };
        for i in 0..weights.rows {
            let pre = params.leak_alpha * self.membrane[i] + drive[i];
            if !pre.is_finite() {
                return Err(Error::Numeric(format!("membrane of neuron {} at step {} is {}", i, self.t, pre)));
            }
            let gate = params.heaviside(pre);
            self.pre_reset[i] = pre;
            self.spikes[i] = match spike_fn {
                SpikeFn::Hard => gate,
                SpikeFn::Relaxed => params.relaxed_spike(pre),
            };
            if let Some(g) = gates.as_mut() {
                g[i] = gate;
            }
            self.membrane[i] = pre - params.v_threshold * gate;
        }
        self.t += 1;
        if let Some(trace) = trace {
            trace.inputs.push(input.to_vec());
            trace.pre_resets.push(self.pre_reset.clone());
            trace.spikes.push(self.spikes.clone());
            if let Some(g) = gates {
                trace.gates.get_or_insert_with(Vec::new).push(g);
            }
        }
        Ok(())
    }
}

/// One discrete LIF step: returns the state after integrating `input`.
pub fn lif_step(state: &LayerState, input: &[f64], weights: &LayerWeights, params: &LifParams) -> Result<LayerState> {
    let mut next = state.clone();
    next.advance(input, weights, params, SpikeFn::Hard, None)?;
    Ok(next)
}

/// Per-step activations cached by the forward pass for the backward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemporalTrace {
    /// Presynaptic activity `x_t` feeding the layer.
    pub inputs: Vec<Vec<f64>>,
    pub pre_resets: Vec<Vec<f64>>,
    pub spikes: Vec<Vec<f64>>,
    /// Reset gates when they differ from `spikes` (relaxed networks only).
    pub gates: Option<Vec<Vec<f64>>>,
}

impl TemporalTrace {
    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn reset_gates(&self, t: usize) -> &[f64] {
        match &self.gates {
            Some(g) => &g[t],
            None => &self.spikes[t],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64) -> LifParams {
        LifParams { leak_alpha: alpha, ..LifParams::default() }
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let w = LayerWeights::from_vec(1, 1, vec![0.7]).unwrap();
        let s = lif_step(&LayerState::new(1), &[0.0], &w, &params(0.5)).unwrap();
        assert_eq!(s.pre_reset, vec![0.0]);
        assert_eq!(s.spikes, vec![0.0]);
        assert_eq!(s.membrane, vec![0.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn crossing_fires_and_soft_resets() {
        let w = LayerWeights::from_vec(1, 1, vec![1.2]).unwrap();
        let s = lif_step(&LayerState::new(1), &[1.0], &w, &params(0.5)).unwrap();
        assert_eq!(s.pre_reset, vec![1.2]);
        assert_eq!(s.spikes, vec![1.0]);
        assert!((s.membrane[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn leak_carries_membrane() {
        let w = LayerWeights::from_vec(1, 1, vec![0.6]).unwrap();
        let p = params(0.5);
        let s1 = lif_step(&LayerState::new(1), &[1.0], &w, &p).unwrap();
        assert_eq!(s1.spikes[0], 0.0);
        let s2 = lif_step(&s1, &[1.0], &w, &p).unwrap();
        // 0.5 * 0.6 + 0.6 = 0.9 < 1
        assert!((s2.pre_reset[0] - 0.9).abs() < 1e-15);
        let s3 = lif_step(&s2, &[1.0], &w, &p).unwrap();
        assert!((s3.pre_reset[0] - 1.05).abs() < 1e-15);
        assert_eq!(s3.spikes[0], 1.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let w = LayerWeights::zeros(2, 3);
        let err = lif_step(&LayerState::new(2), &[1.0, 0.0], &w, &params(0.5)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        let err = lif_step(&LayerState::new(3), &[1.0, 0.0, 0.0], &w, &params(0.5)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn overflowing_membrane_is_a_numeric_error() {
        let w = LayerWeights { rows: 1, cols: 1, values: vec![f64::MAX] };
        let mut s = LayerState::new(1);
        s.membrane[0] = f64::MAX;
        let err = lif_step(&s, &[1.0], &w, &params(1.0)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        assert!(LayerWeights::from_vec(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(LayerWeights::from_vec(1, 2, vec![0.0]).is_err());
    }

    #[test]
    fn trace_records_each_step() {
        let w = LayerWeights::from_vec(2, 1, vec![1.5, 0.2]).unwrap();
        let p = params(0.9);
        let mut s = LayerState::new(2);
        let mut trace = TemporalTrace::default();
        for _ in 0..3 {
            s.advance(&[1.0], &w, &p, SpikeFn::Hard, Some(&mut trace)).unwrap();
        }
        assert_eq!(trace.len(), 3);
        assert!(trace.gates.is_none());
        assert_eq!(trace.reset_gates(0), &[1.0, 0.0]);
    }
}
