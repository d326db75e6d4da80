use alloc::vec;
use alloc::vec::Vec;

use super::sampler::SampledBasis;
use crate::error::bail;
use crate::snn::LayerWeights;
use crate::Result;

/// Largest supported block size.
pub const MAX_BLOCK_SIZE: usize = 64;

/// N:M pattern attached to one weight tensor.
///
/// Blocks run along the fan-in of each weight row, row-major: block `b`
/// covers row `b / blocks_per_row`, columns `M·(b % blocks_per_row)..` up to
/// `M` positions. When `cols % M != 0` the last block of each row is padded
/// with positions that hold no weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskConfig {
    pub n_keep: usize,
    pub block_size: usize,
    pub num_blocks: usize,
    pub rows: usize,
    pub cols: usize,
}

impl MaskConfig {
    /// A single free-standing block.
    pub fn new(n_keep: usize, block_size: usize) -> Result<Self> {
        Self::for_layer(n_keep, block_size, 1, block_size)
    }

    pub fn for_layer(n_keep: usize, block_size: usize, rows: usize, cols: usize) -> Result<Self> {
        if block_size == 0 || block_size > MAX_BLOCK_SIZE {
            bail!(Config, "block size must lie in 1..={}, got {}", MAX_BLOCK_SIZE, block_size);
        }
        if n_keep == 0 || n_keep > block_size {
            bail!(Config, "n_keep must lie in 1..={}, got {}", block_size, n_keep);
        }
        if rows == 0 || cols == 0 {
            bail!(Dimension, "cannot mask an empty {}x{} tensor", rows, cols);
        }
        let num_blocks = rows * cols.div_ceil(block_size);
        Ok(Self { n_keep, block_size, num_blocks, rows, cols })
    }

    pub fn blocks_per_row(&self) -> usize {
        self.cols.div_ceil(self.block_size)
    }

    /// `(row, first column)` of block `b`.
    pub fn block_origin(&self, b: usize) -> (usize, usize) {
        let per_row = self.blocks_per_row();
        (b / per_row, (b % per_row) * self.block_size)
    }

    /// Number of real (non-padding) positions in block `b`.
    pub fn valid_len(&self, b: usize) -> usize {
        let (_, c0) = self.block_origin(b);
        (self.cols - c0).min(self.block_size)
    }

    pub fn padded_positions(&self) -> usize {
        self.num_blocks * self.block_size - self.rows * self.cols
    }

    pub fn maskable_weights(&self) -> usize {
        self.rows * self.cols
    }

    fn check_tiling(&self, weights: &LayerWeights) -> Result<()> {
        if weights.rows != self.rows || weights.cols != self.cols {
            bail!(
                Dimension,
                "mask tiles a {}x{} tensor, weights are {}x{}",
                self.rows,
                self.cols,
                weights.rows,
                weights.cols
            );
        }
        Ok(())
    }
}

/// Frozen binary mask of one block, padding positions always 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HardMask {
    pub bits: Vec<u8>,
}

impl HardMask {
    pub fn ones(block_size: usize, valid: usize) -> Self {
        let mut bits = vec![0u8; block_size];
        bits[..valid].fill(1);
        Self { bits }
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }
}

/// Per-weight 0/1 mask (`rows × cols`) expanded from block masks.
pub fn dense_mask(masks: &[HardMask], cfg: &MaskConfig) -> Result<Vec<f64>> {
    if masks.len() != cfg.num_blocks {
        bail!(Dimension, "{} block masks given for {} blocks", masks.len(), cfg.num_blocks);
    }
    let mut dense = vec![0.0; cfg.rows * cfg.cols];
    for (b, mask) in masks.iter().enumerate() {
        if mask.bits.len() != cfg.block_size {
            bail!(Dimension, "block {} mask has {} bits, expected {}", b, mask.bits.len(), cfg.block_size);
        }
        let (r, c0) = cfg.block_origin(b);
        for s in 0..cfg.valid_len(b) {
            dense[r * cfg.cols + c0 + s] = f64::from(mask.bits[s]);
        }
    }
    Ok(dense)
}

/// Frozen masks of one weight tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorMask {
    pub cfg: MaskConfig,
    pub blocks: Vec<HardMask>,
}

impl TensorMask {
    pub fn new(cfg: MaskConfig, blocks: Vec<HardMask>) -> Result<Self> {
        if blocks.len() != cfg.num_blocks {
            bail!(Dimension, "{} block masks given for {} blocks", blocks.len(), cfg.num_blocks);
        }
        for (b, m) in blocks.iter().enumerate() {
            if m.bits.len() != cfg.block_size {
                bail!(Dimension, "block {} mask has {} bits, expected {}", b, m.bits.len(), cfg.block_size);
            }
            if m.bits[cfg.valid_len(b)..].iter().any(|&v| v != 0) {
                bail!(Domain, "block {} sets a padding position", b);
            }
        }
        Ok(Self { cfg, blocks })
    }

    /// Every real position kept.
    pub fn ones(cfg: MaskConfig) -> Self {
        let blocks = (0..cfg.num_blocks).map(|b| HardMask::ones(cfg.block_size, cfg.valid_len(b))).collect();
        Self { cfg, blocks }
    }

    pub fn dense(&self) -> Vec<f64> {
        dense_mask(&self.blocks, &self.cfg).expect("validated tiling")
    }

    pub fn popcount(&self) -> usize {
        self.blocks.iter().map(HardMask::popcount).sum()
    }

    pub fn apply(&self, weights: &LayerWeights) -> Result<LayerWeights> {
        apply_mask(weights, &self.blocks, &self.cfg)
    }
}

/// Hadamard product of the weights with their block masks.
pub fn apply_mask(weights: &LayerWeights, masks: &[HardMask], cfg: &MaskConfig) -> Result<LayerWeights> {
    cfg.check_tiling(weights)?;
    let dense = dense_mask(masks, cfg)?;
    let values = weights.values.iter().zip(&dense).map(|(w, m)| if *m == 0.0 { 0.0 } else { *w }).collect();
    Ok(LayerWeights { rows: weights.rows, cols: weights.cols, values })
}

/// OR-compose the last hard draws of every block into frozen masks.
pub fn finalize_hard_masks(last_samples: &[Option<SampledBasis>], cfg: &MaskConfig) -> Result<Vec<HardMask>> {
    if last_samples.len() != cfg.num_blocks {
        bail!(State, "{} block samples recorded for {} blocks", last_samples.len(), cfg.num_blocks);
    }
    last_samples
        .iter()
        .enumerate()
        .map(|(b, s)| match s {
            Some(s) if !s.hard.is_empty() => Ok(HardMask { bits: s.mask_bits() }),
            _ => Err(crate::Error::State(alloc::format!("block {} has no recorded sample", b))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{gumbel_draw, BlockLogits, SamplingMode};
    use crate::rng::{substream, Stream};

    fn weights(rows: usize, cols: usize) -> LayerWeights {
        let values = (0..rows * cols).map(|k| 0.1 + k as f64).collect();
        LayerWeights::from_vec(rows, cols, values).unwrap()
    }

    #[test]
    fn tiling_geometry() {
        let cfg = MaskConfig::for_layer(2, 4, 3, 10).unwrap();
        assert_eq!(cfg.blocks_per_row(), 3);
        assert_eq!(cfg.num_blocks, 9);
        assert_eq!(cfg.block_origin(4), (1, 4));
        assert_eq!(cfg.valid_len(2), 2);
        assert_eq!(cfg.valid_len(3), 4);
        assert_eq!(cfg.padded_positions(), 6);
        assert!(MaskConfig::for_layer(0, 4, 1, 4).is_err());
        assert!(MaskConfig::for_layer(5, 4, 1, 4).is_err());
    }

    #[test]
    fn all_ones_mask_is_identity() {
        let cfg = MaskConfig::for_layer(2, 4, 2, 8).unwrap();
        let w = weights(2, 8);
        let masks = vec![HardMask::ones(4, 4); 4];
        assert_eq!(apply_mask(&w, &masks, &cfg).unwrap(), w);
    }

    #[test]
    fn leading_pair_mask_zeroes_trailing_columns() {
        let cfg = MaskConfig::for_layer(2, 4, 2, 8).unwrap();
        let w = weights(2, 8);
        let masks = vec![HardMask { bits: vec![1, 1, 0, 0] }; 4];
        let out = apply_mask(&w, &masks, &cfg).unwrap();
        for r in 0..2 {
            for c in 0..8 {
                let zero = c % 4 >= 2;
                assert_eq!(out.get(r, c) == 0.0, zero, "({}, {})", r, c);
            }
        }
    }

    #[test]
    fn nonzero_count_equals_total_popcount() {
        let cfg = MaskConfig::for_layer(2, 4, 5, 11).unwrap();
        let w = weights(5, 11);
        let mut rng = substream(4, Stream::MaskNoise, &[]);
        let masks: Vec<HardMask> = (0..cfg.num_blocks)
            .map(|b| {
                let logits = BlockLogits::with_padding(vec![0.0; 4], cfg.valid_len(b));
                HardMask {
                    bits: gumbel_draw(&logits, 2, 1.0, SamplingMode::WithReplacement, &mut rng).unwrap().mask_bits(),
                }
            })
            .collect();
        let out = apply_mask(&w, &masks, &cfg).unwrap();
        let nonzero = out.values.iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, masks.iter().map(HardMask::popcount).sum::<usize>());
    }

    #[test]
    fn tiling_mismatch_is_rejected() {
        let cfg = MaskConfig::for_layer(2, 4, 2, 8).unwrap();
        assert!(apply_mask(&weights(2, 7), &vec![HardMask::ones(4, 4); 4], &cfg).is_err());
        assert!(apply_mask(&weights(2, 8), &vec![HardMask::ones(4, 4); 3], &cfg).is_err());
    }

    #[test]
    fn finalize_needs_every_block() {
        let cfg = MaskConfig::for_layer(2, 4, 1, 8).unwrap();
        let s = gumbel_draw(
            &BlockLogits::new(vec![0.0; 4]),
            2,
            1.0,
            SamplingMode::WithReplacement,
            &mut substream(0, Stream::MaskNoise, &[]),
        )
        .unwrap();
        assert!(finalize_hard_masks(&[Some(s.clone()), None], &cfg).is_err());
        assert!(finalize_hard_masks(&[Some(s.clone())], &cfg).is_err());
        let masks = finalize_hard_masks(&[Some(s.clone()), Some(s)], &cfg).unwrap();
        assert_eq!(masks.len(), 2);
    }

    #[test]
    fn collisions_reduce_popcount() {
        let cfg = MaskConfig::new(2, 4).unwrap();
        let distinct = SampledBasis { block_size: 4, hard: vec![0, 3], soft: vec![0.25; 8], temperature: 1.0 };
        let collide = SampledBasis { block_size: 4, hard: vec![2, 2], soft: vec![0.25; 8], temperature: 1.0 };
        assert_eq!(finalize_hard_masks(&[Some(distinct)], &cfg).unwrap()[0].popcount(), 2);
        assert_eq!(finalize_hard_masks(&[Some(collide)], &cfg).unwrap()[0].popcount(), 1);
    }

    #[test]
    fn finalized_random_net_respects_n_of_m_everywhere() {
        for (n, m, rows, cols) in [(2, 4, 16, 20), (2, 8, 8, 30), (3, 5, 7, 13), (1, 4, 4, 9)] {
            let cfg = MaskConfig::for_layer(n, m, rows, cols).unwrap();
            let mut rng = substream(17, Stream::MaskNoise, &[n as u64, m as u64]);
            let samples: Vec<Option<SampledBasis>> = (0..cfg.num_blocks)
                .map(|b| {
                    let theta = (0..m).map(|_| crate::rng::uniform(&mut rng, -1.0, 1.0)).collect();
                    let logits = BlockLogits::with_padding(theta, cfg.valid_len(b));
                    Some(gumbel_draw(&logits, n, 0.5, SamplingMode::WithReplacement, &mut rng).unwrap())
                })
                .collect();
            let masks = finalize_hard_masks(&samples, &cfg).unwrap();
            let w = weights(rows, cols);
            let out = apply_mask(&w, &masks, &cfg).unwrap();
            for b in 0..cfg.num_blocks {
                let (r, c0) = cfg.block_origin(b);
                let nz = (0..cfg.valid_len(b)).filter(|&s| out.get(r, c0 + s) != 0.0).count();
                assert!((1..=n).contains(&nz), "block {} keeps {}", b, nz);
            }
        }
    }
}
