use crate::error::bail;
use crate::Result;

/// Geometric temperature schedule from `tau_max` down to `tau_min` over
/// `total_steps` search steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub tau_max: f64,
    pub tau_min: f64,
    pub total_steps: usize,
}

impl AnnealSchedule {
    pub fn new(tau_max: f64, tau_min: f64, total_steps: usize) -> Result<Self> {
        if !(tau_min > 0.0 && tau_min.is_finite() && tau_max.is_finite()) {
            bail!(Domain, "temperatures must be positive and finite, got tau_min = {}", tau_min);
        }
        if tau_min > tau_max {
            bail!(Domain, "tau_min {} exceeds tau_max {}", tau_min, tau_max);
        }
        Ok(Self { tau_max, tau_min, total_steps })
    }
}

/// `τ_t = max(τ_min, τ_max·(τ_min/τ_max)^{t/T})`, exact at both endpoints.
pub fn anneal_tau(sched: &AnnealSchedule, t: usize) -> Result<f64> {
    if t > sched.total_steps {
        bail!(Domain, "step {} is past the end of a {}-step schedule", t, sched.total_steps);
    }
    if t == 0 {
        return Ok(sched.tau_max);
    }
    if t == sched.total_steps {
        return Ok(sched.tau_min);
    }
    let frac = t as f64 / sched.total_steps as f64;
    let tau = sched.tau_max * libm::pow(sched.tau_min / sched.tau_max, frac);
    Ok(tau.max(sched.tau_min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let s = AnnealSchedule::new(1.0, 0.1, 7).unwrap();
        assert_eq!(anneal_tau(&s, 0).unwrap(), 1.0);
        assert_eq!(anneal_tau(&s, 7).unwrap(), 0.1);
    }

    #[test]
    fn midpoint_is_geometric_mean() {
        let s = AnnealSchedule::new(1.0, 0.1, 10).unwrap();
        let expected = libm::pow(10.0, -0.5);
        assert!((anneal_tau(&s, 5).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.316_227_766_016_837_94).abs() < 1e-15);
    }

    #[test]
    fn non_increasing() {
        let s = AnnealSchedule::new(2.0, 1e-3, 50).unwrap();
        let taus: alloc::vec::Vec<f64> = (0..=50).map(|t| anneal_tau(&s, t).unwrap()).collect();
        assert!(taus.windows(2).all(|w| w[1] <= w[0]));
        assert!(taus.iter().all(|&t| t >= 1e-3));
    }

    #[test]
    fn constant_schedule() {
        let s = AnnealSchedule::new(1.0, 1.0, 4).unwrap();
        for t in 0..=4 {
            assert_eq!(anneal_tau(&s, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let s = AnnealSchedule::new(1.0, 0.1, 3).unwrap();
        assert!(anneal_tau(&s, 4).is_err());
        assert!(AnnealSchedule::new(0.1, 1.0, 3).is_err());
        assert!(AnnealSchedule::new(1.0, 0.0, 3).is_err());
    }
}
