//! Scalar and small-vector numerics shared by the rest of the crate.

use alloc::vec::Vec;

pub use libm::{cos, exp, fabs, log, pow, sqrt};

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let z = exp(x);
        z / (1.0 + z)
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + log(sum)
}

/// `x - logsumexp(x)`, computed directly from the logits.
pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = logsumexp(xs);
    xs.iter().map(|&x| x - lse).collect()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    softmax_into(xs, 1.0, &mut out);
    out
}

/// Tempered softmax `softmax(xs / temperature)` written into `out`.
pub fn softmax_into(xs: &[f64], temperature: f64, out: &mut Vec<f64>) {
    out.clear();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &x in xs {
        let e = exp((x - max) / temperature);
        sum += e;
        out.push(e);
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * log(x)).sum()
}

/// Index of the largest element; ties resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}
