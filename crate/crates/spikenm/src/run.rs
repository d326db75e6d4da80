//! Train and resume with checkpoints and reports on disk.
//!
//! Output directory layout:
//!
//! ```text
//! config.toml              resolved configuration
//! reports.csv              one row per unit
//! reports.jsonl            the same records as JSON lines
//! summary.json             final model only
//! checkpoints/latest.ckpt  after every unit
//! checkpoints/search_end.ckpt, pruned.ckpt, final.ckpt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use spikenm_core::data::Dataset;
use spikenm_core::pipeline::{Phase, PhaseReport, ReportPhase, Trainer, TrainerState};

use crate::checkpoint::{load_state, save_state};
use crate::config::{to_toml, ResolvedConfig};
use crate::dataset::load_dataset;
use crate::error::{Error, Result};
use crate::exec::Rayon;
use crate::report::{read_reports, ReportWriter, Summary};

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    /// `None` uses every core.
    pub threads: Option<usize>,
    /// Stop after this many units in this invocation.
    pub stop_after: Option<usize>,
    /// Print one line per unit to stderr.
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: TrainerState,
    /// Every report of the run so far, including those from before a resume.
    pub reports: Vec<PhaseReport>,
    /// Written when the run completes.
    pub summary: Option<Summary>,
}

impl RunOutcome {
    pub fn finished(&self) -> bool {
        self.summary.is_some()
    }
}

pub fn checkpoint_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("{}.ckpt", name))
}

/// Units (search epochs, prune, finetune epochs) a state has completed.
pub fn completed_units(state: &TrainerState, epochs_search: usize) -> usize {
    match state.phase {
        Phase::Search => state.epoch,
        Phase::Finetune | Phase::Done => epochs_search + 1 + state.epoch,
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    let ck = dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ck).map_err(|e| Error::io(&ck, e))
}

pub fn train(rc: &ResolvedConfig, data: &Dataset, opts: &RunOptions) -> Result<RunOutcome> {
    prepare_dir(&opts.output_dir)?;
    let cfg_path = opts.output_dir.join(CONFIG_FILE);
    fs::write(&cfg_path, to_toml(&rc.run)).map_err(|e| Error::io(&cfg_path, e))?;
    let trainer = Trainer::new(rc.run.clone(), data, rc.hash)?;
    let writer = ReportWriter::create(&opts.output_dir, &[])?;
    drive(trainer, writer, Vec::new(), rc, opts)
}

/// Continue from `checkpoint`; the report files are cut back to the units the
/// checkpoint had completed.
pub fn resume(rc: &ResolvedConfig, data: &Dataset, checkpoint: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let state = load_state(checkpoint, &rc.run)?;
    if state.config_hash != rc.hash {
        return Err(Error::Config(format!(
            "{} was written under config {:016x}, the current config is {:016x}",
            checkpoint.display(),
            state.config_hash,
            rc.hash
        )));
    }
    prepare_dir(&opts.output_dir)?;
    let mut reports = read_reports(&opts.output_dir)?;
    let done = completed_units(&state, rc.run.epochs_search);
    if reports.len() < done {
        return Err(Error::format(
            opts.output_dir.join(crate::report::JSONL_FILE),
            format!("holds {} reports but the checkpoint completed {} units", reports.len(), done),
        ));
    }
    reports.truncate(done);
    let writer = ReportWriter::create(&opts.output_dir, &reports)?;
    let trainer = Trainer::resume(rc.run.clone(), data, state)?;
    drive(trainer, writer, reports, rc, opts)
}

fn drive(
    mut trainer: Trainer<'_>,
    mut writer: ReportWriter,
    mut reports: Vec<PhaseReport>,
    rc: &ResolvedConfig,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let exec = Rayon::new(opts.threads)?;
    let dir = &opts.output_dir;
    let mut ran = 0usize;
    loop {
        if opts.stop_after.is_some_and(|n| ran >= n) {
            break;
        }
        let Some(r) = trainer.advance(&exec)? else { break };
        ran += 1;
        if opts.verbose {
            eprintln!("{}", progress_line(&r));
        }
        writer.append(&r)?;
        save_state(&trainer.state, &checkpoint_path(dir, "latest"))?;
        match r.phase {
            ReportPhase::Search if trainer.state.epoch == rc.run.epochs_search => {
                save_state(&trainer.state, &checkpoint_path(dir, "search_end"))?
            }
            ReportPhase::Prune => save_state(&trainer.state, &checkpoint_path(dir, "pruned"))?,
            _ => {}
        }
        reports.push(r);
    }
    let summary = if trainer.is_done() {
        save_state(&trainer.state, &checkpoint_path(dir, "latest"))?;
        save_state(&trainer.state, &checkpoint_path(dir, "final"))?;
        let eval = trainer.final_evaluation()?;
        let s = Summary::new(&rc.run, rc.hash, trainer.state.global_step, &eval);
        s.write(dir)?;
        Some(s)
    } else {
        None
    };
    Ok(RunOutcome { state: trainer.state, reports, summary })
}

pub fn progress_line(r: &PhaseReport) -> String {
    let phase = match r.phase {
        ReportPhase::Search => "search",
        ReportPhase::Prune => "prune",
        ReportPhase::Finetune => "finetune",
    };
    let mut s = format!(
        "{:<8} ep {:>3} | loss {:.4} | train {:.3} | test {:.3} | weight {:.2}% | sops {:.4}M",
        phase,
        r.global_epoch,
        r.task_loss,
        r.train_accuracy,
        r.test_accuracy,
        r.sparsity.weight_retained_pct,
        r.sparsity.sops_millions
    );
    if let Some(tau) = r.tau {
        s.push_str(&format!(" | tau {:.4}", tau));
    }
    if let Some(e) = r.eid_loss {
        s.push_str(&format!(" | eid {:.4}", e));
    }
    s
}

/// Load the dataset a configuration names.
pub fn dataset_for(rc: &ResolvedConfig) -> Result<Dataset> {
    load_dataset(&rc.run.dataset, rc.run.seed, Path::new(""))
}
