use alloc::vec;
use alloc::vec::Vec;

use super::layer::{LayerWeights, TemporalTrace};
use super::neuron::{surrogate_derivative, LifParams};
use crate::error::bail;
use crate::Result;

/// Errors and gradients produced by [`stbp_backward`] for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardState {
    /// `e_t`: loss sensitivity of the layer's output at each step.
    pub spike_errors: Vec<Vec<f64>>,
    /// `δ_t = ∂L/∂ũ_t` at each step.
    pub membrane_errors: Vec<Vec<f64>>,
    /// `∂L/∂W = Σ_t δ_t x_tᵀ`, row-major like [`LayerWeights`].
    pub weight_grad: Vec<f64>,
    /// `Wᵀ δ_t`: the error handed to the presynaptic layer at each step.
    pub input_errors: Vec<Vec<f64>>,
}

impl BackwardState {
    /// Per-step gradients `g_t = δ_t x_tᵀ` before the sum over time.
    pub fn per_step_weight_grads(&self, trace: &TemporalTrace) -> Vec<Vec<f64>> {
        let rows = self.membrane_errors.first().map_or(0, Vec::len);
        let cols = trace.inputs.first().map_or(0, Vec::len);
        self.membrane_errors
            .iter()
            .zip(&trace.inputs)
            .map(|(delta, x)| {
                let mut g = vec![0.0; rows * cols];
                for (i, &d) in delta.iter().enumerate() {
                    for (j, &xj) in x.iter().enumerate() {
                        g[i * cols + j] = d * xj;
                    }
                }
                g
            })
            .collect()
    }
}

/// Backward-in-time membrane error recursion and weight gradient.
///
/// `δ_t = e_t·φ′(ũ_t − V_th) + α(1 − o_t)·δ_{t+1}` with `δ_T = 0`, and
/// `∂L/∂W = Σ_t δ_t x_tᵀ`. `spike_errors[t]` must already include the error
/// arriving from the layer above.
pub fn stbp_backward(
    trace: &TemporalTrace,
    spike_errors: &[Vec<f64>],
    weights: &LayerWeights,
    params: &LifParams,
) -> Result<BackwardState> {
    let steps = trace.len();
    if spike_errors.len() != steps || trace.inputs.len() != steps || trace.pre_resets.len() != steps {
        bail!(Dimension, "trace has {} steps but {} spike errors were given", steps, spike_errors.len());
    }
    let (rows, cols) = (weights.rows, weights.cols);
    for t in 0..steps {
        if spike_errors[t].len() != rows || trace.pre_resets[t].len() != rows || trace.inputs[t].len() != cols {
            bail!(Dimension, "step {} does not match a {}x{} layer", t, rows, cols);
        }
    }

    let mut membrane_errors = vec![vec![0.0; rows]; steps];
    let mut weight_grad = vec![0.0; rows * cols];
    let mut input_errors = vec![Vec::new(); steps];
    let mut next = vec![0.0; rows];
    for t in (0..steps).rev() {
        let gates = trace.reset_gates(t);
        let delta = &mut membrane_errors[t];
        for i in 0..rows {
            let local = spike_errors[t][i] * surrogate_derivative(trace.pre_resets[t][i], params);
            delta[i] = local + params.leak_alpha * (1.0 - gates[i]) * next[i];
        }
        for (j, &xj) in trace.inputs[t].iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (i, &d) in delta.iter().enumerate() {
                weight_grad[i * cols + j] += d * xj;
            }
        }
        weights.transpose_matvec_into(delta, &mut input_errors[t]);
        next.copy_from_slice(delta);
    }

    Ok(BackwardState { spike_errors: spike_errors.to_vec(), membrane_errors, weight_grad, input_errors })
}
