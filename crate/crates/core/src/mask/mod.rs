//! N:M mask machinery.
//!
//! A block mask is the probabilistic sum (`a ⊕ b = 1 − (1−a)⊙(1−b)`) of `N`
//! one-hot basis vectors, each drawn from a per-block categorical
//! `softmax(θ_i)` over the `M` positions. Sampling uses the Gumbel-Max trick in
//! the forward pass and the tempered Gumbel-Softmax relaxation for gradients.

mod algebra;
mod anneal;
mod layout;
mod sampler;
mod space;

pub use algebra::{compose_mask, compose_mask_backward, prob_sum};
pub use anneal::{anneal_tau, AnnealSchedule};
pub use layout::{apply_mask, dense_mask, finalize_hard_masks, HardMask, MaskConfig, TensorMask, MAX_BLOCK_SIZE};
pub use sampler::{
    draw_block, gumbel_draw, straight_through, BlockLogits, SampledBasis, SamplingMode, StraightThrough,
};
pub use space::{enumerate_mask_space, expected_loss_enumeration, verify_representation, MaskPattern};
