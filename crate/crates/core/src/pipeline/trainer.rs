use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::config::{PruneSource, RunConfig};
use super::executor::BatchExecutor;
use super::state::{Phase, PhaseReport, ReportPhase, TrainerState};
use crate::data::{encode_sample, Dataset, Sample};
use crate::eid::{add_credit_from_backward, block_targets, eid_loss_flat, BlockTargets, EligibilityCredits};
use crate::error::bail;
use crate::mask::{anneal_tau, draw_block, finalize_hard_masks, HardMask, MaskConfig, SampledBasis, TensorMask};
use crate::math::argmax;
use crate::metrics::{fan_out, masked_network, snapshot_from_counts, SparsitySnapshot};
use crate::optim::{cosine_scale, Optimizer, ParamGroup};
use crate::rng::{permutation, substream, Stream};
use crate::snn::{backward_network, forward_network, LayerWeights, Network, SpikeFn};
use crate::{Error, Result};

/// Noise index used when a run prunes without having searched.
const PRUNE_DRAW_STEP: u64 = u64::MAX;

/// Per-sample contribution to a training step.
struct SampleOut {
    loss: f64,
    correct: bool,
    grads: Vec<Vec<f64>>,
    credits: Vec<Option<Vec<f64>>>,
}

/// Gradients of one search step, before the parameter update.
#[derive(Debug, Clone)]
pub struct SearchStep {
    pub samples: Vec<Option<Vec<SampledBasis>>>,
    /// `∂L/∂W` per tensor (already multiplied by the sampled masks).
    pub weight_grads: Vec<Vec<f64>>,
    /// `∂L_task/∂M` per maskable tensor, `G ⊙ W`.
    pub mask_grads: Vec<Option<Vec<f64>>>,
    /// `∂(L_task + λ·L_EID)/∂θ` per maskable tensor.
    pub logit_grads: Vec<Option<Vec<f64>>>,
    pub credits: Vec<Option<EligibilityCredits>>,
    pub task_loss: f64,
    pub eid_loss: f64,
    pub correct: usize,
}

/// Accuracy, loss and SOPs of a model on a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub sparsity: SparsitySnapshot,
}

pub struct Trainer<'a> {
    pub cfg: RunConfig,
    pub data: &'a Dataset,
    pub state: TrainerState,
}

fn layer_mut(net: &mut Network, l: usize) -> &mut LayerWeights {
    if l < net.hidden.len() {
        &mut net.hidden[l]
    } else {
        &mut net.readout
    }
}

fn layer(net: &Network, l: usize) -> &LayerWeights {
    if l < net.hidden.len() {
        &net.hidden[l]
    } else {
        &net.readout
    }
}

fn weight_layout(net: &Network) -> Vec<(ParamGroup, usize)> {
    net.layers().map(|w| (ParamGroup::Weights, w.values.len())).collect()
}

/// Per-weight 0/1 mask from one draw per block.
fn sampled_dense(cfg: &MaskConfig, samples: &[SampledBasis]) -> Vec<f64> {
    let mut dense = vec![0.0; cfg.rows * cfg.cols];
    for (b, s) in samples.iter().enumerate() {
        let (r, c0) = cfg.block_origin(b);
        for &pos in &s.hard {
            dense[r * cfg.cols + c0 + pos] = 1.0;
        }
    }
    dense
}

fn top_n_mask(theta: &[f64], valid: usize, n: usize) -> HardMask {
    let mut bits = vec![0u8; theta.len()];
    let mut avail: Vec<f64> = theta[..valid].to_vec();
    for _ in 0..n.min(valid) {
        let k = argmax(&avail);
        bits[k] = 1;
        avail[k] = f64::NEG_INFINITY;
    }
    HardMask { bits }
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Divergence(format!("{} became {}", what, v)));
    }
    Ok(())
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: RunConfig, data: &'a Dataset, config_hash: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = substream(cfg.seed, Stream::Init, &[]);
        let net = Network::init(
            data.input_dim,
            &cfg.model.hidden,
            data.num_classes,
            cfg.lif,
            cfg.model.readout_leak,
            &mut rng,
        )?;
        let layout = cfg.mask_layout(data.input_dim, data.num_classes)?;
        let logits = layout.iter().map(|c| c.map(|c| vec![0.0; c.num_blocks * c.block_size])).collect::<Vec<_>>();
        let credits = layout
            .iter()
            .map(|c| c.map(|c| EligibilityCredits::new(c.rows, c.cols, cfg.eid_ema_decay)).transpose())
            .collect::<Result<Vec<_>>>()?;
        let mut params = weight_layout(&net);
        params.extend(logits.iter().flatten().map(|t| (ParamGroup::Logits, t.len())));
        let optimizer = Optimizer::new(cfg.optimizer.clone(), &params)?;
        let n = layout.len();
        let state = TrainerState {
            config_hash,
            seed: cfg.seed,
            phase: Phase::Search,
            epoch: 0,
            global_step: 0,
            net,
            layout,
            logits,
            credits,
            optimizer,
            last_samples: vec![None; n],
            masks: vec![None; n],
        };
        Ok(Self { cfg, data, state })
    }

    /// Continue from a saved state produced under the same configuration.
    pub fn resume(cfg: RunConfig, data: &'a Dataset, state: TrainerState) -> Result<Self> {
        cfg.validate()?;
        let fresh = Self::new(cfg, data, state.config_hash)?;
        if state.seed != fresh.cfg.seed {
            bail!(State, "checkpoint seed {} differs from config seed {}", state.seed, fresh.cfg.seed);
        }
        if state.layout != fresh.state.layout {
            bail!(State, "checkpoint mask layout does not match the configuration");
        }
        let same_shape =
            state.net.layers().zip(fresh.state.net.layers()).all(|(a, b)| a.rows == b.rows && a.cols == b.cols)
                && state.net.hidden.len() == fresh.state.net.hidden.len();
        if !same_shape {
            bail!(State, "checkpoint network shape does not match the configuration");
        }
        Ok(Self { cfg: fresh.cfg, data, state })
    }

    pub fn is_done(&self) -> bool {
        self.state.phase == Phase::Done
    }

    fn maskable(&self) -> impl Iterator<Item = (usize, &MaskConfig)> {
        self.state.layout.iter().enumerate().filter_map(|(l, c)| c.as_ref().map(|c| (l, c)))
    }

    fn encode(&self, sample: &Sample, key: &[u64]) -> Result<Vec<Vec<f64>>> {
        let mut rng = substream(self.cfg.seed, Stream::Encode, key);
        encode_sample(&sample.intensities, self.cfg.dataset.time_steps, self.cfg.dataset.encoder, &mut rng)
    }

    fn eval_input(&self, sample: &Sample, split: u64, idx: usize) -> Result<Vec<Vec<f64>>> {
        let mut rng = substream(self.cfg.seed, Stream::Eval, &[split, idx as u64]);
        encode_sample(&sample.intensities, self.cfg.dataset.time_steps, self.cfg.dataset.encoder, &mut rng)
    }

    /// Forward and backward one training sample through `eff`.
    fn sample_pass(&self, eff: &Network, sample: &Sample, key: &[u64], want_credits: bool) -> Result<SampleOut> {
        let input = self.encode(sample, key)?;
        let fwd = forward_network(eff, &input, SpikeFn::Hard)?;
        let correct = fwd.prediction() == sample.label;
        let g = backward_network(eff, &fwd, sample.label)?;
        let mut credits = vec![None; self.state.layout.len()];
        if want_credits {
            for (l, cfg) in self.maskable() {
                let mut c = vec![0.0; cfg.rows * cfg.cols];
                if l < eff.hidden.len() {
                    add_credit_from_backward(&g.hidden[l], &fwd.traces[l], 1.0, &mut c);
                } else {
                    for (dv, s) in g.readout_errors.iter().zip(&fwd.readout_inputs) {
                        for (j, &sj) in s.iter().enumerate() {
                            if sj == 0.0 {
                                continue;
                            }
                            for (i, d) in dv.iter().enumerate() {
                                c[i * cfg.cols + j] += d.abs() * sj.abs();
                            }
                        }
                    }
                }
                credits[l] = Some(c);
            }
        }
        let mut grads: Vec<Vec<f64>> = g.hidden.into_iter().map(|b| b.weight_grad).collect();
        grads.push(g.readout_grad);
        Ok(SampleOut { loss: g.loss, correct, grads, credits })
    }

    /// Run `sample_pass` over a batch and average in index order.
    fn batch_pass<E: BatchExecutor>(
        &self,
        exec: &E,
        eff: &Network,
        batch: &[usize],
        global_epoch: usize,
        want_credits: bool,
    ) -> Result<(f64, usize, Vec<Vec<f64>>, Vec<Option<Vec<f64>>>)> {
        let outs = exec.map(batch.len(), |k| {
            let idx = batch[k];
            self.sample_pass(eff, &self.data.train[idx], &[global_epoch as u64, idx as u64], want_credits)
        });
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut correct = 0;
        let mut grads: Vec<Vec<f64>> = eff.layers().map(|w| vec![0.0; w.values.len()]).collect();
        let mut credits: Vec<Option<Vec<f64>>> = vec![None; grads.len()];
        for out in outs {
            let out = out?;
            loss += out.loss;
            correct += usize::from(out.correct);
            for (acc, g) in grads.iter_mut().zip(&out.grads) {
                acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
            }
            for (acc, c) in credits.iter_mut().zip(out.credits) {
                if let Some(c) = c {
                    match acc {
                        Some(a) => a.iter_mut().zip(&c).for_each(|(a, v)| *a += v),
                        None => *acc = Some(c),
                    }
                }
            }
        }
        grads.iter_mut().flatten().for_each(|v| *v *= scale);
        credits.iter_mut().flatten().flatten().for_each(|v| *v *= scale);
        Ok((loss * scale, correct, grads, credits))
    }

    /// Draw every block's basis vectors for search step `step` at temperature `tau`.
    pub fn draw_masks(&self, step: u64, tau: f64) -> Result<Vec<Option<Vec<SampledBasis>>>> {
        let mut out = vec![None; self.state.layout.len()];
        for (l, cfg) in self.maskable() {
            let theta = self.state.logits[l].as_ref().expect("maskable tensor has logits");
            let mut rng = substream(self.cfg.seed, Stream::MaskNoise, &[step, l as u64]);
            let m = cfg.block_size;
            let mut blocks = Vec::with_capacity(cfg.num_blocks);
            for b in 0..cfg.num_blocks {
                let mut s = SampledBasis { block_size: m, hard: Vec::new(), soft: Vec::new(), temperature: tau };
                draw_block(
                    &theta[b * m..(b + 1) * m],
                    cfg.valid_len(b),
                    cfg.n_keep,
                    tau,
                    self.cfg.mask.sampling,
                    &mut rng,
                    &mut s,
                )?;
                blocks.push(s);
            }
            out[l] = Some(blocks);
        }
        Ok(out)
    }

    /// Network with every maskable tensor multiplied by the hard draws.
    fn sampled_network(&self, samples: &[Option<Vec<SampledBasis>>]) -> (Network, Vec<Option<Vec<f64>>>) {
        let mut eff = self.state.net.clone();
        let mut dense = vec![None; samples.len()];
        for (l, cfg) in self.maskable() {
            if let Some(s) = &samples[l] {
                let d = sampled_dense(cfg, s);
                let w = layer_mut(&mut eff, l);
                w.values.iter_mut().zip(&d).for_each(|(w, m)| *w *= m);
                dense[l] = Some(d);
            }
        }
        (eff, dense)
    }

    /// Gradients of `L_task + λ·L_EID` for one search batch, without updating.
    pub fn search_gradients<E: BatchExecutor>(
        &self,
        exec: &E,
        batch: &[usize],
        tau: f64,
        global_epoch: usize,
    ) -> Result<SearchStep> {
        let samples = self.draw_masks(self.state.global_step, tau)?;
        let (eff, dense) = self.sampled_network(&samples);
        let lambda = self.cfg.eid_lambda;
        let (task_loss, correct, mut grads, batch_credits) =
            self.batch_pass(exec, &eff, batch, global_epoch, lambda > 0.0)?;
        check_finite("task loss", task_loss)?;

        let n = self.state.layout.len();
        let mut mask_grads = vec![None; n];
        let mut logit_grads = vec![None; n];
        for (l, cfg) in self.maskable() {
            let d = dense[l].as_ref().expect("sampled");
            let w = layer(&self.state.net, l);
            let g = &mut grads[l];
            let mg: Vec<f64> = g.iter().zip(&w.values).map(|(g, w)| g * w).collect();
            g.iter_mut().zip(d).for_each(|(g, m)| *g *= m);
            let m = cfg.block_size;
            let mut tg = vec![0.0; cfg.num_blocks * m];
            let mut block_grad = vec![0.0; m];
            for (b, s) in samples[l].as_ref().expect("sampled").iter().enumerate() {
                let (r, c0) = cfg.block_origin(b);
                let valid = cfg.valid_len(b);
                block_grad.fill(0.0);
                block_grad[..valid].copy_from_slice(&mg[r * cfg.cols + c0..r * cfg.cols + c0 + valid]);
                s.pullback_mask_grad(&block_grad, &mut tg[b * m..(b + 1) * m]);
            }
            mask_grads[l] = Some(mg);
            logit_grads[l] = Some(tg);
        }

        let mut credits = self.state.credits.clone();
        let mut eid_loss = 0.0;
        if lambda > 0.0 && self.maskable().next().is_some() {
            let mut targets: Option<BlockTargets> = None;
            let mut flat = Vec::new();
            for (l, cfg) in self.maskable() {
                let c = credits[l].as_mut().expect("maskable tensor has credits");
                c.update(batch_credits[l].as_ref().expect("credits requested"))?;
                let t = block_targets(c, cfg, self.cfg.tau_q, self.cfg.credit_normalization)?;
                match &mut targets {
                    Some(all) => all.extend(&t),
                    None => targets = Some(t),
                }
                flat.extend_from_slice(self.state.logits[l].as_ref().expect("logits"));
            }
            let out = eid_loss_flat(&targets.expect("at least one tensor"), &flat)?;
            eid_loss = out.loss;
            check_finite("EID loss", eid_loss)?;
            let mut offset = 0;
            for (l, _) in self.maskable() {
                let tg = logit_grads[l].as_mut().expect("logit grads");
                tg.iter_mut().zip(&out.grad[offset..]).for_each(|(g, e)| *g += lambda * e);
                offset += tg.len();
            }
        }
        Ok(SearchStep { samples, weight_grads: grads, mask_grads, logit_grads, credits, task_loss, eid_loss, correct })
    }

    fn apply_update(
        &mut self,
        weight_grads: &[Vec<f64>],
        logit_grads: &[Option<Vec<f64>>],
        lr_scale: f64,
    ) -> Result<()> {
        let st = &mut self.state;
        let n_hidden = st.net.hidden.len();
        let (hidden, readout) = (&mut st.net.hidden, &mut st.net.readout);
        let mut params: Vec<&mut [f64]> = hidden.iter_mut().map(|w| w.values.as_mut_slice()).collect();
        params.push(readout.values.as_mut_slice());
        let mut grads: Vec<&[f64]> = weight_grads.iter().map(Vec::as_slice).collect();
        debug_assert_eq!(grads.len(), n_hidden + 1);
        if st.optimizer.params.len() > grads.len() {
            for (t, g) in st.logits.iter_mut().zip(logit_grads) {
                if let (Some(t), Some(g)) = (t.as_mut(), g.as_ref()) {
                    params.push(t.as_mut_slice());
                    grads.push(g.as_slice());
                }
            }
        }
        st.optimizer.step(&mut params, &grads, lr_scale)?;
        if !st.net.layers().all(LayerWeights::is_finite) {
            return Err(Error::Divergence(format!("weights became non-finite at step {}", st.global_step)));
        }
        Ok(())
    }

    fn batches(&self, global_epoch: usize) -> Vec<Vec<usize>> {
        let mut rng = substream(self.cfg.seed, Stream::Shuffle, &[global_epoch as u64]);
        let order = permutation(&mut rng, self.data.train.len());
        order.chunks(self.cfg.batch_size).map(<[usize]>::to_vec).collect()
    }

    /// Temperature of search epoch `epoch` (1-based).
    pub fn tau_for_epoch(&self, epoch: usize) -> Result<f64> {
        anneal_tau(&self.cfg.anneal_schedule()?, epoch)
    }

    fn search_epoch<E: BatchExecutor>(&mut self, exec: &E) -> Result<PhaseReport> {
        let epoch = self.state.epoch + 1;
        let global_epoch = self.state.global_epoch(self.cfg.epochs_search);
        let tau = self.tau_for_epoch(epoch)?;
        let (mut loss, mut eid, mut correct, mut seen, mut steps) = (0.0, 0.0, 0usize, 0usize, 0usize);
        for batch in self.batches(global_epoch) {
            let step = self.search_gradients(exec, &batch, tau, global_epoch)?;
            self.apply_update(&step.weight_grads, &step.logit_grads, 1.0)?;
            self.state.credits = step.credits;
            self.state.last_samples = step.samples;
            self.state.global_step += 1;
            loss += step.task_loss * batch.len() as f64;
            eid += step.eid_loss;
            correct += step.correct;
            seen += batch.len();
            steps += 1;
        }
        self.state.epoch = epoch;
        let masks = self.current_masks()?;
        let test = self.evaluate(&masks, &self.data.test, 0)?;
        Ok(PhaseReport {
            phase: ReportPhase::Search,
            epoch,
            global_epoch: global_epoch + 1,
            task_loss: loss / seen.max(1) as f64,
            eid_loss: Some(eid / steps.max(1) as f64),
            train_accuracy: correct as f64 / seen.max(1) as f64,
            test_accuracy: test.accuracy,
            test_loss: test.loss,
            tau: Some(tau),
            lr: self.cfg.optimizer.lr(ParamGroup::Weights),
            sparsity: test.sparsity,
        })
    }

    /// Hard masks in force right now: frozen after pruning, the latest draws
    /// during search.
    pub fn current_masks(&self) -> Result<Vec<Option<TensorMask>>> {
        if self.state.is_pruned() {
            return Ok(self.state.masks.clone());
        }
        let mut out = vec![None; self.state.layout.len()];
        for (l, cfg) in self.maskable() {
            if let Some(s) = &self.state.last_samples[l] {
                let opts: Vec<Option<SampledBasis>> = s.iter().cloned().map(Some).collect();
                out[l] = Some(TensorMask::new(*cfg, finalize_hard_masks(&opts, cfg)?)?);
            }
        }
        Ok(out)
    }

    /// Freeze masks, zero pruned weights and restart the optimizer on the
    /// surviving weights.
    pub fn prune(&mut self) -> Result<PhaseReport> {
        if self.state.phase != Phase::Search || self.state.epoch != self.cfg.epochs_search {
            bail!(
                State,
                "prune requested before search finished ({} of {} epochs)",
                self.state.epoch,
                self.cfg.epochs_search
            );
        }
        if self.maskable().any(|(l, _)| self.state.last_samples[l].is_none())
            && self.cfg.mask.prune_source == PruneSource::LastSample
        {
            // No search epochs ran: one random draw from the initial logits.
            let tau = self.cfg.anneal.tau_max;
            self.state.last_samples = self.draw_masks(PRUNE_DRAW_STEP, tau)?;
        }
        let mut masks = vec![None; self.state.layout.len()];
        for (l, cfg) in self.maskable() {
            let blocks = match self.cfg.mask.prune_source {
                PruneSource::LastSample => {
                    let s = self.state.last_samples[l]
                        .as_ref()
                        .ok_or_else(|| Error::State(format!("tensor {} has no samples", l)))?;
                    let opts: Vec<Option<SampledBasis>> = s.iter().cloned().map(Some).collect();
                    finalize_hard_masks(&opts, cfg)?
                }
                PruneSource::Argmax => {
                    let theta = self.state.logits[l].as_ref().expect("logits");
                    let m = cfg.block_size;
                    (0..cfg.num_blocks)
                        .map(|b| top_n_mask(&theta[b * m..(b + 1) * m], cfg.valid_len(b), cfg.n_keep))
                        .collect()
                }
            };
            masks[l] = Some(TensorMask::new(*cfg, blocks)?);
        }
        self.state.net = masked_network(&self.state.net, &masks)?;
        self.state.masks = masks;
        self.state.optimizer = Optimizer::new(self.cfg.optimizer.clone(), &weight_layout(&self.state.net))?;
        self.state.phase = Phase::Finetune;
        self.state.epoch = 0;
        self.check_frozen()?;

        let masks = self.state.masks.clone();
        let train = self.evaluate(&masks, &self.data.train, 1)?;
        let test = self.evaluate(&masks, &self.data.test, 0)?;
        Ok(PhaseReport {
            phase: ReportPhase::Prune,
            epoch: 0,
            global_epoch: self.state.global_epoch(self.cfg.epochs_search),
            task_loss: train.loss,
            eid_loss: None,
            train_accuracy: train.accuracy,
            test_accuracy: test.accuracy,
            test_loss: test.loss,
            tau: None,
            lr: 0.0,
            sparsity: test.sparsity,
        })
    }

    /// Every pruned position must still hold an exact zero.
    pub fn check_frozen(&self) -> Result<()> {
        for (l, m) in self.state.masks.iter().enumerate() {
            if let Some(m) = m {
                let w = layer(&self.state.net, l);
                for (k, (mv, wv)) in m.dense().iter().zip(&w.values).enumerate() {
                    if *mv == 0.0 && *wv != 0.0 {
                        return Err(Error::Invariant(format!(
                            "pruned weight {} of tensor {} became {} at step {}",
                            k, l, wv, self.state.global_step
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn finetune_epoch<E: BatchExecutor>(&mut self, exec: &E) -> Result<PhaseReport> {
        let global_epoch = self.state.global_epoch(self.cfg.epochs_search);
        let lr_scale = cosine_scale(self.state.epoch, self.cfg.epochs_finetune);
        let dense: Vec<Option<Vec<f64>>> = self.state.masks.iter().map(|m| m.as_ref().map(TensorMask::dense)).collect();
        let (mut loss, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch in self.batches(global_epoch) {
            let (l_batch, c, mut grads, _) = self.batch_pass(exec, &self.state.net, &batch, global_epoch, false)?;
            check_finite("task loss", l_batch)?;
            for (g, m) in grads.iter_mut().zip(&dense) {
                if let Some(m) = m {
                    g.iter_mut().zip(m).for_each(|(g, m)| *g *= m);
                }
            }
            self.apply_update(&grads, &[], lr_scale)?;
            self.check_frozen()?;
            self.state.global_step += 1;
            loss += l_batch * batch.len() as f64;
            correct += c;
            seen += batch.len();
        }
        self.state.epoch += 1;
        let masks = self.state.masks.clone();
        let test = self.evaluate(&masks, &self.data.test, 0)?;
        Ok(PhaseReport {
            phase: ReportPhase::Finetune,
            epoch: self.state.epoch,
            global_epoch: global_epoch + 1,
            task_loss: loss / seen.max(1) as f64,
            eid_loss: None,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            test_accuracy: test.accuracy,
            test_loss: test.loss,
            tau: None,
            lr: self.cfg.optimizer.lr(ParamGroup::Weights) * lr_scale,
            sparsity: test.sparsity,
        })
    }

    /// Advance by one unit: a search epoch, the prune step, or a finetune
    /// epoch. Returns `None` once the run is complete.
    pub fn advance<E: BatchExecutor>(&mut self, exec: &E) -> Result<Option<PhaseReport>> {
        match self.state.phase {
            Phase::Search if self.state.epoch < self.cfg.epochs_search => self.search_epoch(exec).map(Some),
            Phase::Search => self.prune().map(Some),
            Phase::Finetune if self.state.epoch < self.cfg.epochs_finetune => self.finetune_epoch(exec).map(Some),
            Phase::Finetune => {
                self.state.phase = Phase::Done;
                Ok(None)
            }
            Phase::Done => Ok(None),
        }
    }

    /// Run to completion; `on_report` sees the state after every unit.
    pub fn run<E, F>(&mut self, exec: &E, mut on_report: F) -> Result<Vec<PhaseReport>>
    where
        E: BatchExecutor,
        F: FnMut(&TrainerState, &PhaseReport) -> Result<()>,
    {
        let mut reports = Vec::new();
        while let Some(r) = self.advance(exec)? {
            on_report(&self.state, &r)?;
            reports.push(r);
        }
        Ok(reports)
    }

    /// Accuracy, summed-over-steps cross-entropy and sparsity of the masked
    /// model on `set`. `split` keys the encoding noise.
    pub fn evaluate(&self, masks: &[Option<TensorMask>], set: &[Sample], split: u64) -> Result<Evaluation> {
        let eff = masked_network(&self.state.net, masks)?;
        let fan_outs: Vec<Vec<usize>> = eff.layers().map(fan_out).collect();
        let mut correct = 0usize;
        let mut loss = 0.0;
        let mut sops = vec![0.0; fan_outs.len()];
        for (i, s) in set.iter().enumerate() {
            let input = self.eval_input(s, split, i)?;
            let fwd = forward_network(&eff, &input, SpikeFn::Hard)?;
            correct += usize::from(fwd.prediction() == s.label);
            loss += crate::snn::cross_entropy(&fwd.step_logits, s.label);
            crate::metrics::add_forward_sops(&fwd, &fan_outs, &mut sops);
        }
        let n = set.len().max(1) as f64;
        sops.iter_mut().for_each(|v| *v /= n);
        Ok(Evaluation {
            accuracy: correct as f64 / n,
            loss: loss / n,
            sparsity: snapshot_from_counts(&self.state.net, masks, &sops)?,
        })
    }

    /// Test-set evaluation of the current model under its current masks.
    pub fn final_evaluation(&self) -> Result<Evaluation> {
        let masks = self.current_masks()?;
        self.evaluate(&masks, &self.data.test, 0)
    }
}
