//! Binary checkpoint container.
//!
//! ```text
//! header (56 bytes)
//!   0   [u8; 8]  magic "SNMCKPT\0"
//!   8   u32      version (1)
//!   12  u32      tensor count
//!   16  u64      config hash
//!   24  u64      seed
//!   32  u32      phase (0 search, 1 finetune, 2 done)
//!   36  u32      reserved, zero
//!   40  u64      epochs completed in the phase
//!   48  u64      global optimizer step
//! directory, one entry per tensor
//!   u32 name length, name (UTF-8)
//!   u8  dtype (0 f64, 1 u64, 2 u8)
//!   u8  rank, then rank × u64 dims
//!   u64 payload offset (from the start of the payload section)
//!   u64 payload length in bytes
//! payload section: raw little-endian tensor data
//! ```
//!
//! All integers are little-endian. Tensor names are listed in the README.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use spikenm_core::eid::EligibilityCredits;
use spikenm_core::mask::{HardMask, MaskConfig, SampledBasis, TensorMask};
use spikenm_core::optim::{Optimizer, ParamGroup, ParamState};
use spikenm_core::pipeline::{Phase, RunConfig, TrainerState};
use spikenm_core::snn::{LayerWeights, LifParams, Network};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SNMCKPT\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 56;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    U64(Vec<u64>),
    U8(Vec<u8>),
}

impl TensorData {
    fn dtype(&self) -> u8 {
        match self {
            TensorData::F64(_) => 0,
            TensorData::U64(_) => 1,
            TensorData::U8(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F64(v) => v.len(),
            TensorData::U64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub config_hash: u64,
    pub seed: u64,
    pub phase: Phase,
    pub epoch: u64,
    pub global_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub tensors: BTreeMap<String, Tensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut dir = Vec::new();
        let mut payload = Vec::new();
        for (name, t) in &self.tensors {
            let start = payload.len() as u64;
            t.data.write(&mut payload);
            dir.extend_from_slice(&(name.len() as u32).to_le_bytes());
            dir.extend_from_slice(name.as_bytes());
            dir.push(t.data.dtype());
            dir.push(t.dims.len() as u8);
            t.dims.iter().for_each(|d| dir.extend_from_slice(&d.to_le_bytes()));
            dir.extend_from_slice(&start.to_le_bytes());
            dir.extend_from_slice(&(payload.len() as u64 - start).to_le_bytes());
        }
        let h = &self.header;
        let mut out = Vec::with_capacity(HEADER_LEN + dir.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        out.extend_from_slice(&h.config_hash.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        out.extend_from_slice(&u32::from(h.phase.as_u8()).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&h.epoch.to_le_bytes());
        out.extend_from_slice(&h.global_step.to_le_bytes());
        out.extend_from_slice(&dir);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(path, msg);
        let truncated = || Error::format(path, "truncated");
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not a SNMCKPT file"));
        }
        let mut r = Reader { bytes, pos: 8 };
        let version = r.u32().ok_or_else(truncated)?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {}", version)));
        }
        let count = r.u32().ok_or_else(truncated)? as usize;
        let config_hash = r.u64().ok_or_else(truncated)?;
        let seed = r.u64().ok_or_else(truncated)?;
        let phase = r.u32().ok_or_else(truncated)?;
        let phase = u8::try_from(phase).ok().and_then(Phase::from_u8).ok_or_else(|| bad("unknown phase"))?;
        r.u32().ok_or_else(truncated)?;
        let epoch = r.u64().ok_or_else(truncated)?;
        let global_step = r.u64().ok_or_else(truncated)?;

        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.u32().ok_or_else(truncated)? as usize;
            let name = std::str::from_utf8(r.take(n).ok_or_else(truncated)?)
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_string();
            let dtype = r.u8().ok_or_else(truncated)?;
            let rank = r.u8().ok_or_else(truncated)? as usize;
            let dims = (0..rank).map(|_| r.u64().ok_or_else(truncated)).collect::<Result<Vec<_>>>()?;
            let offset = r.u64().ok_or_else(truncated)? as usize;
            let len = r.u64().ok_or_else(truncated)? as usize;
            entries.push((name, dtype, dims, offset, len));
        }
        let payload = &bytes[r.pos..];
        let mut tensors = BTreeMap::new();
        let mut end_max = 0;
        for (name, dtype, dims, offset, len) in entries {
            let end = offset.checked_add(len).ok_or_else(truncated)?;
            let raw = payload.get(offset..end).ok_or_else(truncated)?;
            end_max = end_max.max(end);
            let elems: u64 = dims.iter().product();
            let data = match dtype {
                0 => TensorData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                1 => TensorData::U64(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
                2 => TensorData::U8(raw.to_vec()),
                _ => return Err(Error::format(path, format!("tensor {} has unknown dtype {}", name, dtype))),
            };
            if data.len() as u64 != elems || (dtype != 2 && len % 8 != 0) {
                return Err(Error::format(path, format!("tensor {} payload does not match its shape", name)));
            }
            tensors.insert(name, Tensor { dims, data });
        }
        if end_max != payload.len() {
            return Err(Error::format(path, format!("{} bytes past the last tensor", payload.len() - end_max)));
        }
        Ok(Self { header: Header { config_hash, seed, phase, epoch, global_step }, tensors })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Written to a sibling temporary file first, then renamed into place.
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    fn put(&mut self, name: String, dims: Vec<usize>, data: TensorData) {
        self.tensors.insert(name, Tensor { dims: dims.into_iter().map(|d| d as u64).collect(), data });
    }
}

fn group_tag(g: ParamGroup) -> u8 {
    match g {
        ParamGroup::Weights => 0,
        ParamGroup::Logits => 1,
    }
}

/// Serialize every field of the trainer state.
pub fn encode_state(state: &TrainerState) -> Checkpoint {
    let mut c = Checkpoint {
        header: Header {
            config_hash: state.config_hash,
            seed: state.seed,
            phase: state.phase,
            epoch: state.epoch as u64,
            global_step: state.global_step,
        },
        tensors: BTreeMap::new(),
    };
    let net = &state.net;
    c.put("net.hidden_layers".into(), vec![1], TensorData::U64(vec![net.hidden.len() as u64]));
    for (l, w) in net.hidden.iter().enumerate() {
        c.put(format!("net.hidden.{}", l), vec![w.rows, w.cols], TensorData::F64(w.values.clone()));
    }
    c.put("net.readout".into(), vec![net.readout.rows, net.readout.cols], TensorData::F64(net.readout.values.clone()));
    c.put(
        "net.lif".into(),
        vec![3],
        TensorData::F64(vec![net.lif.leak_alpha, net.lif.v_threshold, net.lif.surrogate_width]),
    );
    c.put("net.readout_leak".into(), vec![1], TensorData::F64(vec![net.readout_leak]));

    for (l, cfg) in state.layout.iter().enumerate() {
        let Some(cfg) = cfg else { continue };
        let m = cfg.block_size;
        c.put(
            format!("layout.{}", l),
            vec![5],
            TensorData::U64([cfg.n_keep, m, cfg.num_blocks, cfg.rows, cfg.cols].iter().map(|&v| v as u64).collect()),
        );
        if let Some(theta) = &state.logits[l] {
            c.put(format!("logits.{}", l), vec![cfg.num_blocks, m], TensorData::F64(theta.clone()));
        }
        if let Some(cr) = &state.credits[l] {
            c.put(format!("credits.{}", l), vec![cr.rows, cr.cols], TensorData::F64(cr.per_weight.clone()));
            c.put(format!("credits.{}.ema_decay", l), vec![1], TensorData::F64(vec![cr.ema_decay]));
            c.put(format!("credits.{}.steps", l), vec![1], TensorData::U64(vec![cr.step_count]));
        }
        if let Some(samples) = &state.last_samples[l] {
            let counts: Vec<u64> = samples.iter().map(|s| s.hard.len() as u64).collect();
            let hard: Vec<u64> = samples.iter().flat_map(|s| s.hard.iter().map(|&h| h as u64)).collect();
            let soft: Vec<f64> = samples.iter().flat_map(|s| s.soft.iter().copied()).collect();
            let taus: Vec<f64> = samples.iter().map(|s| s.temperature).collect();
            let total = hard.len();
            c.put(format!("samples.{}.count", l), vec![samples.len()], TensorData::U64(counts));
            c.put(format!("samples.{}.hard", l), vec![total], TensorData::U64(hard));
            c.put(format!("samples.{}.soft", l), vec![total, m], TensorData::F64(soft));
            c.put(format!("samples.{}.tau", l), vec![samples.len()], TensorData::F64(taus));
        }
        if let Some(mask) = &state.masks[l] {
            let bits: Vec<u8> = mask.blocks.iter().flat_map(|b| b.bits.iter().copied()).collect();
            c.put(format!("masks.{}", l), vec![cfg.num_blocks, m], TensorData::U8(bits));
        }
    }

    let opt = &state.optimizer;
    c.put("optim.step".into(), vec![1], TensorData::U64(vec![opt.step]));
    c.put(
        "optim.groups".into(),
        vec![opt.params.len()],
        TensorData::U8(opt.params.iter().map(|p| group_tag(p.group)).collect()),
    );
    for (p, ps) in opt.params.iter().enumerate() {
        c.put(format!("optim.{}.m", p), vec![ps.m.len()], TensorData::F64(ps.m.clone()));
        c.put(format!("optim.{}.v", p), vec![ps.v.len()], TensorData::F64(ps.v.clone()));
    }
    c
}

struct Decoder<'a> {
    c: &'a Checkpoint,
    path: &'a Path,
}

impl Decoder<'_> {
    fn get(&self, name: &str) -> Result<&Tensor> {
        self.c.tensors.get(name).ok_or_else(|| Error::format(self.path, format!("missing tensor {}", name)))
    }
    fn f64s(&self, name: &str) -> Result<(&[u64], &[f64])> {
        match self.get(name)? {
            Tensor { dims, data: TensorData::F64(v) } => Ok((dims, v)),
            _ => Err(Error::format(self.path, format!("tensor {} is not f64", name))),
        }
    }
    fn u64s(&self, name: &str) -> Result<&[u64]> {
        match self.get(name)? {
            Tensor { data: TensorData::U64(v), .. } => Ok(v),
            _ => Err(Error::format(self.path, format!("tensor {} is not u64", name))),
        }
    }
    fn u8s(&self, name: &str) -> Result<&[u8]> {
        match self.get(name)? {
            Tensor { data: TensorData::U8(v), .. } => Ok(v),
            _ => Err(Error::format(self.path, format!("tensor {} is not u8", name))),
        }
    }
    fn has(&self, name: &str) -> bool {
        self.c.tensors.contains_key(name)
    }
    fn matrix(&self, name: &str) -> Result<LayerWeights> {
        let (dims, v) = self.f64s(name)?;
        if dims.len() != 2 {
            return Err(Error::format(self.path, format!("tensor {} is not a matrix", name)));
        }
        Ok(LayerWeights::from_vec(dims[0] as usize, dims[1] as usize, v.to_vec())?)
    }
    fn scalar(&self, name: &str) -> Result<f64> {
        self.f64s(name)?.1.first().copied().ok_or_else(|| Error::format(self.path, format!("tensor {} is empty", name)))
    }
}

/// Rebuild a trainer state. The optimizer hyperparameters come from `cfg`;
/// everything else from the file.
pub fn decode_state(c: &Checkpoint, cfg: &RunConfig, path: &Path) -> Result<TrainerState> {
    let d = Decoder { c, path };
    let hidden_layers = *d.u64s("net.hidden_layers")?.first().unwrap_or(&0) as usize;
    let hidden = (0..hidden_layers).map(|l| d.matrix(&format!("net.hidden.{}", l))).collect::<Result<Vec<_>>>()?;
    let readout = d.matrix("net.readout")?;
    let lif_v = d.f64s("net.lif")?.1;
    if lif_v.len() != 3 {
        return Err(Error::format(path, "net.lif must hold 3 values"));
    }
    let lif = LifParams { leak_alpha: lif_v[0], v_threshold: lif_v[1], surrogate_width: lif_v[2], ..cfg.lif };
    let net = Network::new(hidden, readout, lif, d.scalar("net.readout_leak")?)?;

    let n = hidden_layers + 1;
    let mut layout = vec![None; n];
    let mut logits = vec![None; n];
    let mut credits = vec![None; n];
    let mut last_samples = vec![None; n];
    let mut masks = vec![None; n];
    for l in 0..n {
        let key = format!("layout.{}", l);
        if !d.has(&key) {
            continue;
        }
        let v = d.u64s(&key)?;
        if v.len() != 5 {
            return Err(Error::format(path, format!("{} must hold 5 values", key)));
        }
        let mc = MaskConfig::for_layer(v[0] as usize, v[1] as usize, v[3] as usize, v[4] as usize)?;
        if mc.num_blocks as u64 != v[2] {
            return Err(Error::format(path, format!("{} block count disagrees with its shape", key)));
        }
        let m = mc.block_size;
        layout[l] = Some(mc);
        if d.has(&format!("logits.{}", l)) {
            let theta = d.f64s(&format!("logits.{}", l))?.1.to_vec();
            if theta.len() != mc.num_blocks * m {
                return Err(Error::format(path, format!("logits.{} has the wrong length", l)));
            }
            logits[l] = Some(theta);
        }
        if d.has(&format!("credits.{}", l)) {
            let (dims, v) = d.f64s(&format!("credits.{}", l))?;
            let mut cr = EligibilityCredits::new(
                dims[0] as usize,
                dims[1] as usize,
                d.scalar(&format!("credits.{}.ema_decay", l))?,
            )?;
            cr.per_weight = v.to_vec();
            cr.step_count = *d.u64s(&format!("credits.{}.steps", l))?.first().unwrap_or(&0);
            credits[l] = Some(cr);
        }
        if d.has(&format!("samples.{}.count", l)) {
            let counts = d.u64s(&format!("samples.{}.count", l))?;
            let hard = d.u64s(&format!("samples.{}.hard", l))?;
            let soft = d.f64s(&format!("samples.{}.soft", l))?.1;
            let taus = d.f64s(&format!("samples.{}.tau", l))?.1;
            let total: u64 = counts.iter().sum();
            if hard.len() as u64 != total || soft.len() as u64 != total * m as u64 || taus.len() != counts.len() {
                return Err(Error::format(path, format!("samples.{} tensors disagree", l)));
            }
            let mut at = 0usize;
            let mut blocks = Vec::with_capacity(counts.len());
            for (&k, &tau) in counts.iter().zip(taus) {
                let k = k as usize;
                if hard[at..at + k].iter().any(|&h| h as usize >= m) {
                    return Err(Error::format(path, format!("samples.{} index out of range", l)));
                }
                blocks.push(SampledBasis {
                    block_size: m,
                    hard: hard[at..at + k].iter().map(|&h| h as usize).collect(),
                    soft: soft[at * m..(at + k) * m].to_vec(),
                    temperature: tau,
                });
                at += k;
            }
            last_samples[l] = Some(blocks);
        }
        if d.has(&format!("masks.{}", l)) {
            let bits = d.u8s(&format!("masks.{}", l))?;
            if bits.len() != mc.num_blocks * m {
                return Err(Error::format(path, format!("masks.{} has the wrong length", l)));
            }
            let blocks = bits.chunks_exact(m).map(|b| HardMask { bits: b.to_vec() }).collect();
            masks[l] = Some(TensorMask::new(mc, blocks)?);
        }
    }

    let groups = d.u8s("optim.groups")?;
    let params = groups
        .iter()
        .enumerate()
        .map(|(p, &g)| {
            let group = match g {
                0 => ParamGroup::Weights,
                1 => ParamGroup::Logits,
                _ => return Err(Error::format(path, format!("unknown parameter group {}", g))),
            };
            let m = d.f64s(&format!("optim.{}.m", p))?.1.to_vec();
            let v = d.f64s(&format!("optim.{}.v", p))?.1.to_vec();
            Ok(ParamState { group, m, v })
        })
        .collect::<Result<Vec<_>>>()?;
    let optimizer =
        Optimizer { config: cfg.optimizer.clone(), step: *d.u64s("optim.step")?.first().unwrap_or(&0), params };

    let h = c.header;
    Ok(TrainerState {
        config_hash: h.config_hash,
        seed: h.seed,
        phase: h.phase,
        epoch: h.epoch as usize,
        global_step: h.global_step,
        net,
        layout,
        logits,
        credits,
        optimizer,
        last_samples,
        masks,
    })
}

pub fn save_state(state: &TrainerState, path: &Path) -> Result<()> {
    encode_state(state).write(path)
}

/// Read a checkpoint and check that its network has the shape `cfg` asks for.
pub fn load_state(path: &Path, cfg: &RunConfig) -> Result<TrainerState> {
    let state = decode_state(&Checkpoint::read(path)?, cfg, path)?;
    let sizes: Vec<usize> = state.net.hidden.iter().map(|w| w.rows).collect();
    if sizes != cfg.model.hidden {
        return Err(Error::Config(format!(
            "{} holds hidden layers {:?}, config asks for {:?}",
            path.display(),
            sizes,
            cfg.model.hidden
        )));
    }
    Ok(state)
}
