use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spikenm::checkpoint::{decode_state, load_state, Checkpoint};
use spikenm::config::{self, parse_set, ResolvedConfig};
use spikenm::error::{exit, Error, Result};
use spikenm::maskfile;
use spikenm::report::{read_reports, Summary};
use spikenm::run::{self, dataset_for, progress_line, RunOptions, CONFIG_FILE};
use spikenm::verify::{self, Suite};
use spikenm_core::pipeline::Trainer;

/// Learn N:M sparse spiking networks.
///
/// Any `--section.key=value` argument overrides that key of the config file.
#[derive(Parser, Debug)]
#[command(name = "spikenm", version)]
struct Cli {
    /// Worker threads for batch evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for every artifact a command writes.
    #[arg(long, global = true, env = "SPIKENM_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search, prune and finetune.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Stop after this many units (search epochs, prune, finetune epochs).
        #[arg(long)]
        stop_after: Option<usize>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Continue a run from a checkpoint.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        stop_after: Option<usize>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Evaluate a checkpoint on both splits.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write the frozen masks of a pruned checkpoint.
    ExportMask {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Relative paths land under the output directory.
        #[arg(long, default_value = "masks.snmmask")]
        out: PathBuf,
    },
    /// Run oracle suites and print a pass/fail table.
    Verify {
        #[arg(value_enum, default_values_t = [Suite::All])]
        suites: Vec<Suite>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the report stream and summary of a run directory.
    Report,
}

fn resolve(args: &ConfigArgs, dotted: &[(String, String)], fallback: Option<PathBuf>) -> Result<ResolvedConfig> {
    let mut overrides = dotted.to_vec();
    for s in &args.set {
        overrides.push(parse_set(s)?);
    }
    let path = args.config.clone().or(fallback);
    config::load(path.as_deref(), &overrides, args.seed)
}

/// `<run>/checkpoints/x.ckpt` → `<run>`.
fn run_dir_of(checkpoint: &Path) -> Option<PathBuf> {
    checkpoint.parent()?.parent().map(Path::to_path_buf)
}

fn saved_config(checkpoint: &Path) -> Option<PathBuf> {
    run_dir_of(checkpoint).map(|d| d.join(CONFIG_FILE)).filter(|p| p.exists())
}

fn output_dir(cli: &Cli, checkpoint: Option<&Path>) -> PathBuf {
    cli.output_dir
        .clone()
        .or_else(|| checkpoint.and_then(run_dir_of))
        .unwrap_or_else(|| PathBuf::from("runs").join("default"))
}

fn execute(cli: &Cli, dotted: &[(String, String)]) -> Result<()> {
    match &cli.command {
        Command::Train { cfg, stop_after, quiet } => {
            let rc = resolve(cfg, dotted, None)?;
            let data = dataset_for(&rc)?;
            let opts = RunOptions {
                output_dir: output_dir(cli, None),
                threads: cli.threads,
                stop_after: *stop_after,
                verbose: !quiet,
            };
            let out = run::train(&rc, &data, &opts)?;
            finish(&opts, out.summary.as_ref())
        }
        Command::Resume { checkpoint, cfg, stop_after, quiet } => {
            let rc = resolve(cfg, dotted, saved_config(checkpoint))?;
            let data = dataset_for(&rc)?;
            let opts = RunOptions {
                output_dir: output_dir(cli, Some(checkpoint)),
                threads: cli.threads,
                stop_after: *stop_after,
                verbose: !quiet,
            };
            let out = run::resume(&rc, &data, checkpoint, &opts)?;
            finish(&opts, out.summary.as_ref())
        }
        Command::Eval { checkpoint, cfg } => {
            let rc = resolve(cfg, dotted, saved_config(checkpoint))?;
            let data = dataset_for(&rc)?;
            let state = load_state(checkpoint, &rc.run)?;
            let trainer = Trainer::resume(rc.run.clone(), &data, state)?;
            let masks = trainer.current_masks()?;
            let test = trainer.evaluate(&masks, &data.test, 0)?;
            let train = trainer.evaluate(&masks, &data.train, 1)?;
            let out = serde_json::json!({
                "checkpoint": checkpoint.display().to_string(),
                "phase": format!("{:?}", trainer.state.phase).to_lowercase(),
                "epoch": trainer.state.epoch,
                "train_accuracy": train.accuracy,
                "test_accuracy": test.accuracy,
                "test_loss": test.loss,
                "sparsity": test.sparsity,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            Ok(())
        }
        Command::ExportMask { checkpoint, out } => {
            // Masks do not depend on the config, so defaults suffice to decode.
            let state = decode_state(&Checkpoint::read(checkpoint)?, &Default::default(), checkpoint)?;
            if !state.is_pruned() {
                return Err(spikenm_core::Error::State(format!(
                    "{} is a search checkpoint; masks exist only after pruning",
                    checkpoint.display()
                ))
                .into());
            }
            let masks: Vec<_> = state.masks.iter().enumerate().filter_map(|(l, m)| m.clone().map(|m| (l, m))).collect();
            let dir = output_dir(cli, Some(checkpoint));
            let path = if out.is_absolute() { out.clone() } else { dir.join(out) };
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            maskfile::write(&masks, &path)?;
            println!("wrote {} ({} bytes)", path.display(), maskfile::encoded_len(&masks));
            for (l, m) in &masks {
                println!(
                    "tensor {}: {}:{} x {} blocks, popcount histogram {:?}",
                    l,
                    m.cfg.n_keep,
                    m.cfg.block_size,
                    m.cfg.num_blocks,
                    maskfile::popcount_histogram(m)
                );
            }
            Ok(())
        }
        Command::Verify { suites, seed } => verify::verify(suites, *seed).map(|_| ()),
        Command::Report => {
            let dir = output_dir(cli, None);
            for r in read_reports(&dir)? {
                println!("{}", progress_line(&r));
            }
            match Summary::read(&dir) {
                Ok(s) => println!("{}", serde_json::to_string_pretty(&s).expect("json")),
                Err(_) => println!("(no summary: run incomplete)"),
            }
            Ok(())
        }
    }
}

fn finish(opts: &RunOptions, summary: Option<&Summary>) -> Result<()> {
    match summary {
        Some(s) => eprintln!(
            "done: test accuracy {:.4}, weight {:.2}%, SOPs {:.4}M -> {}",
            s.test_accuracy,
            s.weight_retained_pct,
            s.sops_millions,
            opts.output_dir.display()
        ),
        None => eprintln!("stopped early; resume from {}", run::checkpoint_path(&opts.output_dir, "latest").display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, dotted) = config::split_overrides(std::env::args());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { exit::OK as u8 });
        }
    };
    match execute(&cli, &dotted) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
