//! Acceptance criteria, one test each. Every test writes a single
//! `[criterion N] PASS|FAIL ...` line to stderr before asserting.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use spikenm::config::{self, ResolvedConfig};
use spikenm::exec::Rayon;
use spikenm::run::{self, dataset_for, RunOptions};
use spikenm::verify;
use spikenm_core::mask::{anneal_tau, SamplingMode, TensorMask};
use spikenm_core::pipeline::{Phase, PhaseReport, ReportPhase, Trainer, TrainerState};
use spikenm_core::snn::LayerWeights;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn line(n: usize, name: &str, pass: bool, detail: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[criterion {:>2}] {} {}: {}", n, if pass { "PASS" } else { "FAIL" }, name, detail);
}

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn desk_config(overrides: &[(&str, &str)], seed: u64) -> ResolvedConfig {
    let ov: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    config::load(Some(&repo_path("configs/digits_2of4.toml")), &ov, Some(seed)).unwrap()
}

fn layer(state: &TrainerState, l: usize) -> &LayerWeights {
    state.net.layers().nth(l).unwrap()
}

/// Zero positions of the frozen masks, checked against the weights.
fn zero_pattern_held(state: &TrainerState, masks: &[Option<TensorMask>]) -> bool {
    masks.iter().enumerate().all(|(l, m)| match m {
        Some(m) => m.dense().iter().zip(&layer(state, l).values).all(|(mv, wv)| *mv != 0.0 || *wv == 0.0),
        None => true,
    })
}

struct RunRecord {
    accuracy: f64,
    reports: Vec<PhaseReport>,
    /// Every block popcount in [1, N] right after prune.
    blocks_valid: Option<bool>,
    /// Zero pattern intact after every finetune unit.
    frozen_held: bool,
    finetune_units: usize,
}

fn train_desk(overrides: &[(&str, &str)], seed: u64) -> RunRecord {
    let rc = desk_config(overrides, seed);
    let data = dataset_for(&rc).unwrap();
    let exec = Rayon::new(None).unwrap();
    let mut t = Trainer::new(rc.run.clone(), &data, rc.hash).unwrap();
    let mut frozen: Option<Vec<Option<TensorMask>>> = None;
    let mut blocks_valid = None;
    let mut frozen_held = true;
    let mut finetune_units = 0;
    let n = rc.run.mask.n_keep;
    let reports = t
        .run(&exec, |state, r| {
            match r.phase {
                ReportPhase::Prune => {
                    blocks_valid = Some(
                        state.masks.iter().flatten().flat_map(|m| &m.blocks).all(|b| (1..=n).contains(&b.popcount())),
                    );
                    frozen = Some(state.masks.clone());
                }
                ReportPhase::Finetune => {
                    finetune_units += 1;
                    let masks = frozen.as_ref().expect("prune precedes finetune");
                    frozen_held &= &state.masks == masks && zero_pattern_held(state, masks);
                }
                ReportPhase::Search => {}
            }
            Ok(())
        })
        .unwrap();
    assert_eq!(t.state.phase, Phase::Done);
    let accuracy = t.final_evaluation().unwrap().accuracy * 100.0;
    RunRecord { accuracy, reports, blocks_valid, frozen_held, finetune_units }
}

struct Sweep {
    runs: Vec<RunRecord>,
}

impl Sweep {
    fn mean(&self) -> f64 {
        self.runs.iter().map(|r| r.accuracy).sum::<f64>() / self.runs.len() as f64
    }
    fn accs(&self) -> String {
        self.runs.iter().map(|r| format!("{:.2}", r.accuracy)).collect::<Vec<_>>().join(" ")
    }
}

fn sweep(overrides: &[(&str, &str)]) -> Sweep {
    Sweep { runs: SEEDS.iter().map(|&s| train_desk(overrides, s)).collect() }
}

fn spikenm_2of4() -> &'static Sweep {
    static S: OnceLock<Sweep> = OnceLock::new();
    S.get_or_init(|| sweep(&[]))
}

#[test]
fn criterion_01_representation_theorem() {
    let t = Instant::now();
    let checks = verify::representation().unwrap();
    let elapsed = t.elapsed();
    let ok = checks.iter().all(|c| c.pass);
    let card: Vec<String> = checks.iter().map(|c| format!("{} {}", c.name, c.measured)).collect();
    let pass = ok && elapsed < Duration::from_secs(5);
    line(1, "representation theorem", pass, &format!("{} in {:.2?}", card.join("; "), elapsed));
    assert!(ok);
    assert!(checks.iter().any(|c| c.name == "2:4" && c.measured.starts_with("|S| = 10,")));
    assert!(checks.iter().any(|c| c.name == "2:8" && c.measured.starts_with("|S| = 36,")));
    assert!(elapsed < Duration::from_secs(5));
}

#[test]
fn criterion_02_gradient_fidelity() {
    let t = Instant::now();
    let r = spikenm_core::oracle::gradcheck_suite(100, 0, 1e-3).unwrap();
    let elapsed = t.elapsed();
    let pass = r.max_rel_error < 1e-4 && r.cases == 100 && elapsed < Duration::from_secs(60);
    line(
        2,
        "STBP vs finite differences",
        pass,
        &format!(
            "{} nets, {} weights, max rel err {:.3e} (< 1e-4) in {:.2?}",
            r.cases, r.weights_checked, r.max_rel_error, elapsed
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_estimator_consistency() {
    let t = Instant::now();
    let cases = spikenm_core::oracle::estimator_suite(100_000, 0).unwrap();
    let elapsed = t.elapsed();
    let worst_z = cases.iter().map(|c| c.z_score()).fold(0.0, f64::max);
    let st = cases.iter().all(|c| c.st_forward_exact);
    let pass = worst_z < 3.0 && st && elapsed < Duration::from_secs(30);
    line(
        3,
        "Monte-Carlo vs enumeration",
        pass,
        &format!(
            "{} instances, 1e5 draws, worst z {:.2} (< 3), straight-through exact: {} in {:.2?}",
            cases.len(),
            worst_z,
            st,
            elapsed
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_mask_invariants() {
    let runs = &spikenm_2of4().runs;
    let valid = runs.iter().all(|r| r.blocks_valid == Some(true));
    let held = runs.iter().all(|r| r.frozen_held && r.finetune_units > 0);
    let units: usize = runs.iter().map(|r| r.finetune_units).sum();
    let pass = valid && held;
    line(
        4,
        "mask invariants",
        pass,
        &format!(
            "{} runs: popcount in [1, N] for every block: {}; zero pattern intact over {} finetune epochs: {}",
            runs.len(),
            valid,
            units,
            held
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_annealing_endpoints() {
    let rc = desk_config(&[], 0);
    let sched = rc.run.anneal_schedule().unwrap();
    let t0 = anneal_tau(&sched, 0).unwrap();
    let tt = anneal_tau(&sched, sched.total_steps).unwrap();
    let reports = &spikenm_2of4().runs[0].reports;
    let taus: Vec<f64> = reports.iter().filter_map(|r| r.tau).collect();
    let monotone = taus.windows(2).all(|w| w[1] <= w[0]);
    let ends =
        t0 == rc.run.anneal.tau_max && tt == rc.run.anneal.tau_min && taus.last() == Some(&rc.run.anneal.tau_min);
    let pass = ends && monotone && taus.len() == rc.run.epochs_search;
    line(
        5,
        "annealing endpoints",
        pass,
        &format!("tau(0) = {}, tau(T) = {}, report stream {:?} non-increasing: {}", t0, tt, taus, monotone),
    );
    assert!(pass);
}

#[test]
fn criterion_06_eid_correctness() {
    let t = Instant::now();
    let r = spikenm_core::oracle::eid_suite(1000, 0).unwrap();
    let elapsed = t.elapsed();
    let pass = r.min_loss >= 0.0
        && r.max_loss_at_match <= 1e-12
        && r.min_loss_off_match > 0.0
        && r.max_grad_error < 1e-6
        && elapsed < Duration::from_secs(10);
    line(
        6,
        "EID loss and gradient",
        pass,
        &format!(
            "{} instances: min KL {:.3e}, KL at q = pi <= {:.1e}, grad rel err {:.3e} (< 1e-6) in {:.2?}",
            r.instances, r.min_loss, r.max_loss_at_match, r.max_grad_error, elapsed
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_scaled_down_main_result() {
    let t = Instant::now();
    let dense = sweep(&[("mode", "dense")]);
    let nm24 = spikenm_2of4();
    let nm28 = sweep(&[("mask.block_size", "8")]);
    let (d, a, b) = (dense.mean(), nm24.mean(), nm28.mean());
    let gap24 = d - a;
    let gap28 = d - b;
    let pass = gap24 <= 1.0 && gap28 <= 2.5 && a >= b;
    line(
        7,
        "2:4 / 2:8 vs dense on digits",
        pass,
        &format!(
            "dense {:.2} [{}], 2:4 {:.2} [{}] gap {:.2} (<= 1.0), 2:8 {:.2} [{}] gap {:.2} (<= 2.5), 2:4 >= 2:8: {} ({:.0?})",
            d,
            dense.accs(),
            a,
            nm24.accs(),
            gap24,
            b,
            nm28.accs(),
            gap28,
            a >= b,
            t.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_ablation_trends() {
    let t = Instant::now();
    let base = spikenm_2of4();
    let fixed = sweep(&[("anneal.tau_min", "1.0")]);
    let no_eid = sweep(&[("eid_lambda", "0.0")]);
    let (b, f, z) = (base.mean(), fixed.mean(), no_eid.mean());
    let pass = b > f && b > z;
    line(
        8,
        "annealing and EID ablations",
        pass,
        &format!(
            "anneal 1->0.1 {:.2} vs fixed tau=1 {:.2} [{}]: {}; lambda=5 {:.2} vs lambda=0 {:.2} [{}]: {} ({:.0?})",
            b,
            f,
            fixed.accs(),
            b > f,
            b,
            z,
            no_eid.accs(),
            b > z,
            t.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_sparsity_accounting() {
    let checks = verify::metrics().unwrap();
    let exact =
        checks.iter().filter(|c| c.name.starts_with("distinct") || c.name.starts_with("one collision")).all(|c| c.pass);

    // A full run without collisions: distinct draws and no padding.
    let rc = desk_config(
        &[("mask.sampling", "\"without_replacement\""), ("epochs_search", "1"), ("epochs_finetune", "1")],
        0,
    );
    assert_eq!(rc.run.mask.sampling, SamplingMode::WithoutReplacement);
    let data = dataset_for(&rc).unwrap();
    let mut t = Trainer::new(rc.run.clone(), &data, rc.hash).unwrap();
    let reports = t.run(&Rayon::new(None).unwrap(), |_, _| Ok(())).unwrap();
    let pruned = reports.iter().find(|r| r.phase == ReportPhase::Prune).unwrap();
    let expected = 100.0 * rc.run.mask.n_keep as f64 / rc.run.mask.block_size as f64;
    let run_exact = pruned.sparsity.weight_retained_pct == expected;

    let pass = exact && run_exact;
    let detail: Vec<String> = checks.iter().map(|c| format!("{} {}", c.name, c.measured)).collect();
    line(
        9,
        "sparsity accounting",
        pass,
        &format!(
            "{}; pipeline 2:4 without collisions {}% (= {}%)",
            detail.join(", "),
            pruned.sparsity.weight_retained_pct,
            expected
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_reproducibility() {
    let base = tempfile::tempdir().unwrap();
    let rc = config::load(Some(&repo_path("configs/minimal.toml")), &[], Some(11)).unwrap();
    let data = dataset_for(&rc).unwrap();
    let opts = |name: &str, stop: Option<usize>, threads: usize| RunOptions {
        output_dir: base.path().join(name),
        threads: Some(threads),
        stop_after: stop,
        verbose: false,
    };

    run::train(&rc, &data, &opts("a", None, 1)).unwrap();
    run::train(&rc, &data, &opts("b", None, 2)).unwrap();
    let mid = rc.run.epochs_search / 2 + 1;
    let partial = run::train(&rc, &data, &opts("c", Some(mid), 1)).unwrap();
    assert!(partial.summary.is_none() && partial.state.phase == Phase::Search);
    let ckpt = run::checkpoint_path(&base.path().join("c"), "latest");
    run::resume(&rc, &data, &ckpt, &opts("c", None, 1)).unwrap();

    let read = |n: &str| fs::read(base.path().join(n).join("summary.json")).unwrap();
    let (a, b, c) = (read("a"), read("b"), read("c"));
    let reports = |n: &str| fs::read(base.path().join(n).join("reports.jsonl")).unwrap();
    let pass = a == b && a == c && reports("a") == reports("c");
    line(
        10,
        "reproducibility",
        pass,
        &format!(
            "summary.json ({} bytes) identical across two runs: {}; after resume at search epoch {}: {}",
            a.len(),
            a == b,
            mid,
            a == c
        ),
    );
    assert!(pass);
}
