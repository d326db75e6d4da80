//! Discrete-time LIF layers, a leaky-integrator readout, and the STBP
//! backward pass.
//!
//! Time is indexed from `0` to `T - 1`. At step `t` a layer integrates
//! `ũ_t = α·u_{t-1} + W·x_t`, fires `o_t = H(ũ_t − V_th)` and soft-resets
//! `u_t = ũ_t − V_th·o_t`, with `u_{-1} = 0`. The reset subtracts the spike
//! emitted at the same step.

mod backward;
mod layer;
mod network;
mod neuron;

pub use backward::{stbp_backward, BackwardState};
pub use layer::{lif_step, LayerState, LayerWeights, SpikeFn, TemporalTrace};
pub use network::{backward_network, cross_entropy, forward_network, ForwardOutput, Network, NetworkGrads};
pub use neuron::{surrogate_derivative, LifParams, ResetMode};
