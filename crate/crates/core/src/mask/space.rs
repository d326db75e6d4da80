use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::algebra::compose_mask;
use super::layout::{HardMask, MaskConfig};
use super::sampler::BlockLogits;
use crate::error::bail;
use crate::Result;

/// Largest block size the exhaustive routines accept.
pub const MAX_ENUMERABLE_BLOCK: usize = 24;

/// A block mask as a bit pattern: bit `s` is position `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MaskPattern(pub u32);

impl MaskPattern {
    pub fn popcount(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn to_bits(self, block_size: usize) -> Vec<u8> {
        (0..block_size).map(|s| ((self.0 >> s) & 1) as u8).collect()
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Self(bits.iter().enumerate().fold(0, |acc, (s, &b)| acc | (u32::from(b != 0) << s)))
    }
}

/// Every binary `M`-vector with between 1 and `N` ones, in ascending bit order.
pub fn enumerate_mask_space(cfg: &MaskConfig) -> Result<Vec<MaskPattern>> {
    let m = cfg.block_size;
    if m > MAX_ENUMERABLE_BLOCK {
        bail!(Refused, "block size {} exceeds the enumeration limit {}", m, MAX_ENUMERABLE_BLOCK);
    }
    Ok((1u32..(1u32 << m)).map(MaskPattern).filter(|p| p.popcount() <= cfg.n_keep).collect())
}

fn one_hot(m: usize, s: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[s] = 1.0;
    v
}

/// Check that `{⊕_k a_k : a_k ∈ {e_1..e_M}}` is exactly the N:M mask space,
/// and that `N` distinct basis vectors always compose to exactly `N` ones.
/// Brute force over all `M^N` tuples.
pub fn verify_representation(cfg: &MaskConfig) -> Result<bool> {
    let (n, m) = (cfg.n_keep, cfg.block_size);
    let tuples = libm::pow(m as f64, n as f64);
    if m > MAX_ENUMERABLE_BLOCK || tuples > (1u64 << 24) as f64 {
        bail!(Refused, "{}^{} basis tuples is too many to enumerate", m, n);
    }
    let expected: BTreeSet<MaskPattern> = enumerate_mask_space(cfg)?.into_iter().collect();

    let mut composed = BTreeSet::new();
    let mut idx = vec![0usize; n];
    loop {
        let basis: Vec<Vec<f64>> = idx.iter().map(|&s| one_hot(m, s)).collect();
        let mask = compose_mask(&basis)?;
        if mask.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Ok(false);
        }
        let bits: Vec<u8> = mask.iter().map(|&x| x as u8).collect();
        let pattern = MaskPattern::from_bits(&bits);
        let distinct = idx.iter().collect::<BTreeSet<_>>().len() == n;
        if distinct && pattern.popcount() != n {
            return Ok(false);
        }
        composed.insert(pattern);

        // Odometer increment over {0..M}^N.
        let mut k = 0;
        loop {
            if k == n {
                return Ok(composed == expected);
            }
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Exact expected loss over the basis draws of 1-2 small blocks:
/// `Σ_{tuples} L(⊕_k a_k) · Π p(a | π̃)`. Oracle for Monte-Carlo estimates.
pub fn expected_loss_enumeration<F>(blocks: &[BlockLogits], n_keep: usize, mut loss: F) -> Result<f64>
where
    F: FnMut(&[HardMask]) -> f64,
{
    if blocks.is_empty() || blocks.len() > 2 || n_keep == 0 || n_keep > 2 {
        bail!(Refused, "enumeration supports 1-2 blocks with N <= 2, got {} blocks, N = {}", blocks.len(), n_keep);
    }
    if blocks.iter().any(|b| b.theta.len() > 4) {
        bail!(Refused, "enumeration supports block size <= 4");
    }
    // Per block: every (mask, probability) pair over the M^N ordered tuples.
    let per_block: Vec<Vec<(HardMask, f64)>> = blocks
        .iter()
        .map(|b| {
            let m = b.theta.len();
            let p = b.probs();
            let mut out = Vec::new();
            let mut idx = vec![0usize; n_keep];
            'outer: loop {
                let mut bits = vec![0u8; m];
                let mut prob = 1.0;
                for &s in &idx {
                    bits[s] = 1;
                    prob *= p[s];
                }
                out.push((HardMask { bits }, prob));
                let mut k = 0;
                loop {
                    if k == n_keep {
                        break 'outer;
                    }
                    idx[k] += 1;
                    if idx[k] < m {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
            }
            out
        })
        .collect();

    let mut total = 0.0;
    match per_block.as_slice() {
        [only] => {
            for (mask, p) in only {
                total += p * loss(core::slice::from_ref(mask));
            }
        }
        [first, second] => {
            for (m0, p0) in first {
                for (m1, p1) in second {
                    total += p0 * p1 * loss(&[m0.clone(), m1.clone()]);
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::binomial;

    fn cfg(n: usize, m: usize) -> MaskConfig {
        MaskConfig::new(n, m).unwrap()
    }

    #[test]
    fn two_of_four_has_ten_masks() {
        assert_eq!(enumerate_mask_space(&cfg(2, 4)).unwrap().len(), 10);
    }

    #[test]
    fn two_of_eight_has_thirty_six_masks() {
        assert_eq!(enumerate_mask_space(&cfg(2, 8)).unwrap().len(), 36);
    }

    #[test]
    fn one_of_three_is_the_one_hots() {
        let space = enumerate_mask_space(&cfg(1, 3)).unwrap();
        let bits: Vec<Vec<u8>> = space.iter().map(|p| p.to_bits(3)).collect();
        assert_eq!(bits, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn cardinality_is_a_sum_of_binomials() {
        for m in 1..=12 {
            for n in 1..=m {
                let expected: u64 = (1..=n as u64).map(|k| binomial(m as u64, k)).sum();
                assert_eq!(enumerate_mask_space(&cfg(n, m)).unwrap().len() as u64, expected);
            }
        }
    }

    #[test]
    fn oversized_blocks_are_refused() {
        let big = MaskConfig::new(2, 25).unwrap();
        assert!(matches!(enumerate_mask_space(&big), Err(crate::Error::Refused(_))));
    }

    #[test]
    fn representation_holds_on_small_patterns() {
        for (n, m) in [(1, 2), (1, 4), (2, 4), (2, 8), (3, 5), (2, 16)] {
            assert!(verify_representation(&cfg(n, m)).unwrap(), "{}:{}", n, m);
        }
    }

    #[test]
    fn one_of_m_composes_to_one_hots() {
        assert!(verify_representation(&cfg(1, 6)).unwrap());
        let space = enumerate_mask_space(&cfg(1, 6)).unwrap();
        assert!(space.iter().all(|p| p.popcount() == 1));
    }

    #[test]
    fn pattern_bits_round_trip() {
        let p = MaskPattern(0b1011_0001);
        assert_eq!(MaskPattern::from_bits(&p.to_bits(8)), p);
    }

    #[test]
    fn deterministic_categorical_gives_the_induced_mask_loss() {
        let logits = BlockLogits::new(vec![-200.0, 200.0, -200.0, -200.0]);
        let e =
            expected_loss_enumeration(&[logits], 2, |m| if m[0].bits == [0, 1, 0, 0] { 3.5 } else { 100.0 }).unwrap();
        assert!((e - 3.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_two_of_two_popcount_expectation() {
        // Tuples (0,0),(1,1) give popcount 1; (0,1),(1,0) give 2; each has mass 1/4.
        let logits = BlockLogits::new(vec![0.0, 0.0]);
        let e = expected_loss_enumeration(&[logits], 2, |m| m[0].popcount() as f64).unwrap();
        assert!((e - 1.5).abs() < 1e-15);
    }

    #[test]
    fn oversized_enumeration_is_refused() {
        let b = BlockLogits::new(vec![0.0; 5]);
        assert!(expected_loss_enumeration(&[b], 2, |_| 0.0).is_err());
        let b = BlockLogits::new(vec![0.0; 4]);
        assert!(expected_loss_enumeration(&[b.clone(), b.clone(), b], 2, |_| 0.0).is_err());
    }
}
