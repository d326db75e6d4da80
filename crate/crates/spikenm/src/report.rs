//! Report stream and summary record.
//!
//! `reports.csv` and `reports.jsonl` carry one record per unit (search epoch,
//! prune step, finetune epoch). `summary.json` describes the final model only,
//! so two runs that end in the same state write the same bytes.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikenm_core::metrics::LayerSparsity;
use spikenm_core::pipeline::{PhaseReport, ReportPhase, RunConfig, TrainMode};

use crate::error::{Error, Result};

pub const CSV_FILE: &str = "reports.csv";
pub const JSONL_FILE: &str = "reports.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

pub const CSV_COLUMNS: [&str; 13] = [
    "phase",
    "epoch",
    "global_epoch",
    "task_loss",
    "eid_loss",
    "train_accuracy",
    "test_accuracy",
    "test_loss",
    "tau",
    "lr",
    "weight_pct",
    "conn_pct",
    "sops_m",
];

#[derive(Debug, Serialize)]
struct CsvRow {
    phase: ReportPhase,
    epoch: usize,
    global_epoch: usize,
    task_loss: f64,
    eid_loss: Option<f64>,
    train_accuracy: f64,
    test_accuracy: f64,
    test_loss: f64,
    tau: Option<f64>,
    lr: f64,
    weight_pct: f64,
    conn_pct: f64,
    sops_m: f64,
}

impl From<&PhaseReport> for CsvRow {
    fn from(r: &PhaseReport) -> Self {
        Self {
            phase: r.phase,
            epoch: r.epoch,
            global_epoch: r.global_epoch,
            task_loss: r.task_loss,
            eid_loss: r.eid_loss,
            train_accuracy: r.train_accuracy,
            test_accuracy: r.test_accuracy,
            test_loss: r.test_loss,
            tau: r.tau,
            lr: r.lr,
            weight_pct: r.sparsity.weight_retained_pct,
            conn_pct: r.sparsity.conn_retained_pct,
            sops_m: r.sparsity.sops_millions,
        }
    }
}

/// Appends to `reports.csv` and `reports.jsonl` in an output directory.
pub struct ReportWriter {
    dir: PathBuf,
}

impl ReportWriter {
    /// Start both files over with `existing` as their content.
    pub fn create(dir: &Path, existing: &[PhaseReport]) -> Result<Self> {
        let w = Self { dir: dir.to_path_buf() };
        let csv_path = dir.join(CSV_FILE);
        let mut csv =
            csv::WriterBuilder::new().has_headers(false).from_path(&csv_path).map_err(|e| csv_err(&csv_path, e))?;
        csv.write_record(CSV_COLUMNS).map_err(|e| csv_err(&csv_path, e))?;
        for r in existing {
            csv.serialize(CsvRow::from(r)).map_err(|e| csv_err(&csv_path, e))?;
        }
        csv.flush().map_err(|e| Error::io(&csv_path, e))?;
        let jsonl = dir.join(JSONL_FILE);
        let mut f = File::create(&jsonl).map_err(|e| Error::io(&jsonl, e))?;
        for r in existing {
            writeln!(f, "{}", serde_json::to_string(r).expect("report serializes"))
                .map_err(|e| Error::io(&jsonl, e))?;
        }
        Ok(w)
    }

    pub fn append(&mut self, r: &PhaseReport) -> Result<()> {
        let csv_path = self.dir.join(CSV_FILE);
        let f = OpenOptions::new().append(true).open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(f);
        csv.serialize(CsvRow::from(r)).map_err(|e| csv_err(&csv_path, e))?;
        csv.flush().map_err(|e| Error::io(&csv_path, e))?;
        let jsonl = self.dir.join(JSONL_FILE);
        let mut f = OpenOptions::new().append(true).open(&jsonl).map_err(|e| Error::io(&jsonl, e))?;
        writeln!(f, "{}", serde_json::to_string(r).expect("report serializes")).map_err(|e| Error::io(&jsonl, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

pub fn read_reports(dir: &Path) -> Result<Vec<PhaseReport>> {
    let path = dir.join(JSONL_FILE);
    let f = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(&path, format!("line {}: {}", i + 1, e)))?);
    }
    Ok(out)
}

/// Final-state record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub mode: TrainMode,
    pub n_keep: usize,
    pub block_size: usize,
    pub epochs_search: usize,
    pub epochs_finetune: usize,
    pub global_step: u64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub weight_retained_pct: f64,
    pub conn_retained_pct: f64,
    pub sops_millions: f64,
    pub per_layer: Vec<LayerSparsity>,
}

impl Summary {
    pub fn new(cfg: &RunConfig, hash: u64, global_step: u64, eval: &spikenm_core::pipeline::Evaluation) -> Self {
        Self {
            config_hash: format!("{:016x}", hash),
            seed: cfg.seed,
            mode: cfg.mode,
            n_keep: cfg.mask.n_keep,
            block_size: cfg.mask.block_size,
            epochs_search: cfg.epochs_search,
            epochs_finetune: cfg.epochs_finetune,
            global_step,
            test_accuracy: eval.accuracy,
            test_loss: eval.loss,
            weight_retained_pct: eval.sparsity.weight_retained_pct,
            conn_retained_pct: eval.sparsity.conn_retained_pct,
            sops_millions: eval.sparsity.sops_millions,
            per_layer: eval.sparsity.per_layer.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(SUMMARY_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}
