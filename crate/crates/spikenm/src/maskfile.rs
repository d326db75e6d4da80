//! Exported N:M masks.
//!
//! ```text
//! file header (16 bytes)
//!   [u8; 8] magic "SNMMASK\0"
//!   u32     version (1)
//!   u32     tensor count
//! per tensor
//!   u16 N, u16 M, u32 layer index, u64 block count B, u32 rows, u32 cols  (24 bytes)
//!   ceil(B·M / 8) bytes of mask bits
//! ```
//!
//! Bit `b·M + s` is position `s` of block `b`, stored LSB-first: bit `k`
//! lives in byte `k / 8` at bit `k % 8`. Blocks run row-major along fan-in;
//! positions past the end of a row are padding and always 0.

use std::fs;
use std::path::Path;

use spikenm_core::mask::{HardMask, MaskConfig, TensorMask};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SNMMASK\0";
pub const VERSION: u32 = 1;
pub const FILE_HEADER_LEN: usize = 16;
pub const TENSOR_HEADER_LEN: usize = 24;

pub fn payload_len(cfg: &MaskConfig) -> usize {
    (cfg.num_blocks * cfg.block_size).div_ceil(8)
}

/// Exact size of the encoding of `masks`.
pub fn encoded_len(masks: &[(usize, TensorMask)]) -> usize {
    FILE_HEADER_LEN + masks.iter().map(|(_, m)| TENSOR_HEADER_LEN + payload_len(&m.cfg)).sum::<usize>()
}

pub fn encode(masks: &[(usize, TensorMask)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(masks));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(masks.len() as u32).to_le_bytes());
    for (layer, m) in masks {
        let c = &m.cfg;
        out.extend_from_slice(&(c.n_keep as u16).to_le_bytes());
        out.extend_from_slice(&(c.block_size as u16).to_le_bytes());
        out.extend_from_slice(&(*layer as u32).to_le_bytes());
        out.extend_from_slice(&(c.num_blocks as u64).to_le_bytes());
        out.extend_from_slice(&(c.rows as u32).to_le_bytes());
        out.extend_from_slice(&(c.cols as u32).to_le_bytes());
        let mut bytes = vec![0u8; payload_len(c)];
        for (k, &bit) in m.blocks.iter().flat_map(|b| b.bits.iter()).enumerate() {
            if bit != 0 {
                bytes[k / 8] |= 1 << (k % 8);
            }
        }
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<(usize, TensorMask)>> {
    let bad = |msg: String| Error::format(path, msg);
    if bytes.len() < FILE_HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("not a SNMMASK file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {}", version)));
    }
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let mut pos = FILE_HEADER_LEN;
    let mut out = Vec::with_capacity(count);
    for t in 0..count {
        let h = bytes.get(pos..pos + TENSOR_HEADER_LEN).ok_or_else(|| bad(format!("tensor {} header truncated", t)))?;
        let n = u16::from_le_bytes(h[0..2].try_into().unwrap()) as usize;
        let m = u16::from_le_bytes(h[2..4].try_into().unwrap()) as usize;
        let layer = u32::from_le_bytes(h[4..8].try_into().unwrap()) as usize;
        let blocks = u64::from_le_bytes(h[8..16].try_into().unwrap()) as usize;
        let rows = u32::from_le_bytes(h[16..20].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(h[20..24].try_into().unwrap()) as usize;
        pos += TENSOR_HEADER_LEN;
        let cfg = MaskConfig::for_layer(n, m, rows, cols).map_err(|e| bad(format!("tensor {}: {}", t, e)))?;
        if cfg.num_blocks != blocks {
            return Err(bad(format!("tensor {} declares {} blocks, shape implies {}", t, blocks, cfg.num_blocks)));
        }
        let len = payload_len(&cfg);
        let payload = bytes.get(pos..pos + len).ok_or_else(|| bad(format!("tensor {} bits truncated", t)))?;
        pos += len;
        let bit = |k: usize| (payload[k / 8] >> (k % 8)) & 1;
        let hard: Vec<HardMask> =
            (0..blocks).map(|b| HardMask { bits: (0..m).map(|s| bit(b * m + s)).collect() }).collect();
        if let Some(b) = hard.iter().position(|h| !(1..=n).contains(&h.popcount())) {
            return Err(bad(format!(
                "tensor {} block {} keeps {} of {}, expected 1..={}",
                t,
                b,
                hard[b].popcount(),
                m,
                n
            )));
        }
        let mask = TensorMask::new(cfg, hard).map_err(|e| bad(format!("tensor {}: {}", t, e)))?;
        out.push((layer, mask));
    }
    if pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(out)
}

pub fn write(masks: &[(usize, TensorMask)], path: &Path) -> Result<()> {
    fs::write(path, encode(masks)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<(usize, TensorMask)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Blocks with popcount `k` at index `k`.
pub fn popcount_histogram(mask: &TensorMask) -> Vec<usize> {
    let mut h = vec![0; mask.cfg.block_size + 1];
    for b in &mask.blocks {
        h[b.popcount()] += 1;
    }
    h
}
