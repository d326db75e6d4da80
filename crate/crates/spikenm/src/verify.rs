//! Oracle suites behind `spikenm verify`.

use std::fmt::Write as _;
use std::time::Instant;

use spikenm_core::mask::{anneal_tau, AnnealSchedule, HardMask, MaskConfig, TensorMask};
use spikenm_core::metrics::{connectivity_retention, count_sops, weight_retention};
use spikenm_core::oracle::{
    chi_square_statistic, eid_suite, estimator_suite, gradcheck_suite, lif_reference_suite, representation_suite,
    sampler_counts,
};
use spikenm_core::snn::{LayerWeights, LifParams, Network};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Representation,
    Gradcheck,
    Estimator,
    Sampler,
    Eid,
    Lif,
    Anneal,
    Metrics,
    All,
}

impl Suite {
    pub const EACH: [Suite; 8] = [
        Suite::Representation,
        Suite::Gradcheck,
        Suite::Estimator,
        Suite::Sampler,
        Suite::Eid,
        Suite::Lif,
        Suite::Anneal,
        Suite::Metrics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Representation => "representation",
            Suite::Gradcheck => "gradcheck",
            Suite::Estimator => "estimator",
            Suite::Sampler => "sampler",
            Suite::Eid => "eid",
            Suite::Lif => "lif",
            Suite::Anneal => "anneal",
            Suite::Metrics => "metrics",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: String,
    pub bound: String,
    pub pass: bool,
}

fn check(
    suite: &'static str,
    name: impl Into<String>,
    measured: impl Into<String>,
    bound: impl Into<String>,
    pass: bool,
) -> Check {
    Check { suite, name: name.into(), measured: measured.into(), bound: bound.into(), pass }
}

pub const GRADCHECK_CASES: usize = 100;
pub const GRADCHECK_H: f64 = 1e-3;
pub const GRADCHECK_TOL: f64 = 1e-4;
pub const ESTIMATOR_DRAWS: usize = 100_000;
pub const ESTIMATOR_MAX_Z: f64 = 3.0;
pub const SAMPLER_DRAWS: usize = 100_000;
pub const SAMPLER_MIN_P: f64 = 0.01;
pub const EID_INSTANCES: usize = 1000;
pub const EID_GRAD_TOL: f64 = 1e-6;

pub fn representation() -> Result<Vec<Check>> {
    let cases = representation_suite(&[(1, 2), (1, 4), (2, 4), (2, 8), (3, 5)])?;
    Ok(cases
        .iter()
        .map(|c| {
            check(
                "representation",
                format!("{}:{}", c.n_keep, c.block_size),
                format!("|S| = {}, composes = {}", c.cardinality, c.composes_exactly),
                format!("|S| = {}", c.expected),
                c.cardinality as u64 == c.expected && c.composes_exactly,
            )
        })
        .collect())
}

pub fn gradcheck(seed: u64) -> Result<Vec<Check>> {
    let r = gradcheck_suite(GRADCHECK_CASES, seed, GRADCHECK_H)?;
    Ok(vec![check(
        "gradcheck",
        format!("{} nets, {} weights", r.cases, r.weights_checked),
        format!("max rel err {:.3e} (net {})", r.max_rel_error, r.worst_case),
        format!("< {:e}", GRADCHECK_TOL),
        r.max_rel_error < GRADCHECK_TOL,
    )])
}

pub fn estimator(seed: u64) -> Result<Vec<Check>> {
    let cases = estimator_suite(ESTIMATOR_DRAWS, seed)?;
    let mut out = Vec::new();
    for c in &cases {
        let z = c.z_score();
        out.push(check(
            "estimator",
            format!("{} MC vs exact", c.name),
            format!("{:.5} vs {:.5}, z = {:.2}", c.mc_mean, c.exact, z),
            format!("z < {}", ESTIMATOR_MAX_Z),
            z < ESTIMATOR_MAX_Z,
        ));
        out.push(check(
            "estimator",
            format!("{} straight-through forward", c.name),
            if c.st_forward_exact { "bit-identical" } else { "differs" },
            "bit-identical",
            c.st_forward_exact,
        ));
    }
    Ok(out)
}

/// p-value of Pearson's statistic with `k − 1` degrees of freedom.
pub fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    let stat = chi_square_statistic(observed, expected);
    let dist = ChiSquared::new((observed.len() - 1) as f64).expect("positive dof");
    1.0 - dist.cdf(stat)
}

pub fn sampler(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, theta) in
        [("uniform M=4", vec![0.0; 4]), ("skewed M=4", vec![1.0, -0.5, 0.3, 0.0]), ("uniform M=8", vec![0.0; 8])]
    {
        let (counts, expected) = sampler_counts(&theta, SAMPLER_DRAWS, seed)?;
        let p = chi_square_p(&counts, &expected);
        out.push(check(
            "sampler",
            format!("{} chi-square", name),
            format!("p = {:.4}", p),
            format!("> {}", SAMPLER_MIN_P),
            p > SAMPLER_MIN_P,
        ));
    }
    let (counts, _) = sampler_counts(&[0.0; 4], SAMPLER_DRAWS, seed)?;
    let worst = counts.iter().map(|&c| (c as f64 / SAMPLER_DRAWS as f64 - 0.25).abs()).fold(0.0, f64::max);
    out.push(check(
        "sampler",
        "uniform M=4 frequencies",
        format!("max |f - 0.25| = {:.4}", worst),
        "<= 0.01",
        worst <= 0.01,
    ));
    let (counts, _) = sampler_counts(&[50.0, -50.0, -50.0, -50.0], 10_000, seed)?;
    let f = counts[0] as f64 / 10_000.0;
    out.push(check("sampler", "degenerate logits", format!("freq = {}", f), "= 1", f == 1.0));
    Ok(out)
}

pub fn eid(seed: u64) -> Result<Vec<Check>> {
    let r = eid_suite(EID_INSTANCES, seed)?;
    Ok(vec![
        check("eid", "KL >= 0", format!("min {:.3e}", r.min_loss), ">= 0", r.min_loss >= 0.0),
        check(
            "eid",
            "KL = 0 at q = pi",
            format!("max {:.3e}", r.max_loss_at_match),
            "<= 1e-12",
            r.max_loss_at_match <= 1e-12,
        ),
        check(
            "eid",
            "KL > 0 off match",
            format!("min {:.3e}", r.min_loss_off_match),
            "> 0",
            r.min_loss_off_match > 0.0,
        ),
        check(
            "eid",
            format!("gradient vs FD, {} instances", r.instances),
            format!("max rel err {:.3e}", r.max_grad_error),
            format!("< {:e}", EID_GRAD_TOL),
            r.max_grad_error < EID_GRAD_TOL,
        ),
    ])
}

pub fn lif(seed: u64) -> Result<Vec<Check>> {
    let (identical, diff) = lif_reference_suite(100, seed)?;
    Ok(vec![
        check(
            "lif",
            "rasters vs scalar loop, 100 nets",
            if identical { "identical" } else { "differ" },
            "identical",
            identical,
        ),
        check("lif", "loss vs scalar loop", format!("max diff {:.3e}", diff), "< 1e-6", diff < 1e-6),
    ])
}

pub fn anneal() -> Result<Vec<Check>> {
    let s = AnnealSchedule::new(1.0, 0.1, 10)?;
    let taus = (0..=10).map(|t| anneal_tau(&s, t)).collect::<spikenm_core::Result<Vec<f64>>>()?;
    let half = anneal_tau(&AnnealSchedule::new(1.0, 0.1, 2)?, 1)?;
    let monotone = taus.windows(2).all(|w| w[1] <= w[0]);
    Ok(vec![
        check("anneal", "tau(0)", format!("{}", taus[0]), "= 1", taus[0] == 1.0),
        check("anneal", "tau(T)", format!("{}", taus[10]), "= 0.1", taus[10] == 0.1),
        check("anneal", "tau(T/2)", format!("{:.6}", half), "10^-1/2", (half - 10f64.powf(-0.5)).abs() < 1e-12),
        check("anneal", "non-increasing over 10 steps", if monotone { "yes" } else { "no" }, "yes", monotone),
    ])
}

fn ones(rows: usize, cols: usize) -> LayerWeights {
    LayerWeights::from_vec(rows, cols, vec![1.0; rows * cols]).expect("shape")
}

fn tensor_mask(cfg: MaskConfig, blocks: &[&[u8]]) -> Result<TensorMask> {
    Ok(TensorMask::new(cfg, blocks.iter().map(|b| HardMask { bits: b.to_vec() }).collect())?)
}

pub fn metrics() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let net = Network::new(vec![ones(4, 8)], ones(3, 4), LifParams::default(), 0.5)?;
    let cfg = MaskConfig::for_layer(2, 4, 4, 8)?;
    let blocks: Vec<&[u8]> =
        (0..8).map(|b| if b % 2 == 0 { &[1u8, 1, 0, 0][..] } else { &[0u8, 0, 1, 1][..] }).collect();
    let w = weight_retention(&net, &[Some(tensor_mask(cfg, &blocks)?), None])?;
    out.push(check("metrics", "distinct 2:4", format!("{}%", w), "= 50%", w == 50.0));

    let cfg28 = MaskConfig::for_layer(2, 8, 4, 8)?;
    let blocks: Vec<&[u8]> = vec![&[0, 1, 0, 0, 0, 0, 1, 0][..]; 4];
    let w = weight_retention(&net, &[Some(tensor_mask(cfg28, &blocks)?), None])?;
    out.push(check("metrics", "distinct 2:8", format!("{}%", w), "= 25%", w == 25.0));

    let net1 = Network::new(vec![ones(1, 8)], ones(2, 1), LifParams::default(), 0.5)?;
    let cfg = MaskConfig::for_layer(2, 4, 1, 8)?;
    let w = weight_retention(&net1, &[Some(tensor_mask(cfg, &[&[1, 0, 1, 0], &[0, 1, 0, 0]])?), None])?;
    out.push(check("metrics", "one collision, 2 blocks", format!("{}%", w), "= 37.5%", w == 37.5));

    let cfg = MaskConfig::for_layer(2, 4, 4, 8)?;
    let c = connectivity_retention(&net, &[Some(TensorMask::ones(cfg)), None])?;
    out.push(check("metrics", "all-ones mask", format!("{}%", c), "= 100%", c == 100.0));

    let sops = count_sops(&net, &[], &[vec![vec![0.0; 8]; 5]])?;
    out.push(check("metrics", "silent input SOPs", format!("{}", sops), "= 0", sops == 0.0));
    Ok(out)
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    match suite {
        Suite::Representation => representation(),
        Suite::Gradcheck => gradcheck(seed),
        Suite::Estimator => estimator(seed),
        Suite::Sampler => sampler(seed),
        Suite::Eid => eid(seed),
        Suite::Lif => lif(seed),
        Suite::Anneal => anneal(),
        Suite::Metrics => metrics(),
        Suite::All => {
            let mut out = Vec::new();
            for s in Suite::EACH {
                out.extend(run_suite(s, seed)?);
            }
            Ok(out)
        }
    }
}

pub fn format_table(checks: &[Check]) -> String {
    let w_suite = checks.iter().map(|c| c.suite.len()).max().unwrap_or(5).max(5);
    let w_name = checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
    let w_meas = checks.iter().map(|c| c.measured.len()).max().unwrap_or(8).max(8);
    let mut s = String::new();
    let _ = writeln!(s, "{:<4}  {:<w_suite$}  {:<w_name$}  {:<w_meas$}  bound", "", "suite", "check", "measured");
    for c in checks {
        let _ = writeln!(
            s,
            "{:<4}  {:<w_suite$}  {:<w_name$}  {:<w_meas$}  {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.measured,
            c.bound
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    let _ = writeln!(s, "{} checks, {} failed", checks.len(), failed);
    s
}

/// Run the suites, print the table, and fail if any check failed.
pub fn verify(suites: &[Suite], seed: u64) -> Result<Vec<Check>> {
    let mut all = Vec::new();
    for &s in suites {
        let t = Instant::now();
        let checks = run_suite(s, seed)?;
        eprintln!("{} finished in {:.2?}", s.name(), t.elapsed());
        all.extend(checks);
    }
    print!("{}", format_table(&all));
    let failed: Vec<String> = all.iter().filter(|c| !c.pass).map(|c| format!("{}/{}", c.suite, c.name)).collect();
    if failed.is_empty() {
        Ok(all)
    } else {
        Err(Error::Oracle(failed.join(", ")))
    }
}
