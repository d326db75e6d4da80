use alloc::vec::Vec;

use crate::error::bail;
use crate::Result;

fn check_unit(v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        bail!(Domain, "probabilistic sum needs entries in [0, 1], got {}", x);
    }
    Ok(())
}

/// Coordinate-wise probabilistic sum `1 − (1 − a)⊙(1 − b)`.
pub fn prob_sum(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        bail!(Dimension, "operands have lengths {} and {}", a.len(), b.len());
    }
    check_unit(a)?;
    check_unit(b)?;
    Ok(a.iter().zip(b).map(|(&x, &y)| 1.0 - (1.0 - x) * (1.0 - y)).collect())
}

/// `⊕_k a_k`, folded left to right from the identity `0`.
pub fn compose_mask(basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = basis.first() else {
        bail!(Dimension, "cannot compose an empty set of vectors");
    };
    check_unit(first)?;
    let mut acc = first.clone();
    for a in &basis[1..] {
        acc = prob_sum(&acc, a)?;
    }
    Ok(acc)
}

/// Vector-Jacobian product of [`compose_mask`]:
/// `∂M_s/∂a_{k,s} = Π_{j≠k} (1 − a_{j,s})`.
pub fn compose_mask_backward(basis: &[Vec<f64>], upstream: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = upstream.len();
    if basis.iter().any(|a| a.len() != m) {
        bail!(Dimension, "basis vectors must have length {}", m);
    }
    Ok((0..basis.len())
        .map(|k| {
            (0..m)
                .map(|s| {
                    let others: f64 =
                        basis.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, a)| 1.0 - a[s]).product();
                    upstream[s] * others
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn e(m: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        v
    }

    #[test]
    fn zero_is_the_identity() {
        let a = vec![0.2, 0.9, 0.0, 1.0];
        let r = prob_sum(&a, &[0.0; 4]).unwrap();
        assert!(r.iter().zip(&a).all(|(x, y)| (x - y).abs() <= 1e-12));
        let b = vec![0.0, 1.0, 1.0, 0.0];
        assert_eq!(prob_sum(&b, &[0.0; 4]).unwrap(), b);
    }

    #[test]
    fn disjoint_one_hots_or_together() {
        assert_eq!(prob_sum(&e(4, 0), &e(4, 1)).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(compose_mask(&[e(4, 0), e(4, 1)]).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_one_hots_collapse() {
        let m = compose_mask(&[e(4, 2), e(4, 2)]).unwrap();
        assert_eq!(m, e(4, 2));
    }

    #[test]
    fn out_of_range_entries_are_rejected() {
        assert!(prob_sum(&[1.5], &[0.0]).is_err());
        assert!(prob_sum(&[0.5], &[-0.1]).is_err());
        assert!(prob_sum(&[0.5, 0.5], &[0.1]).is_err());
        assert!(compose_mask(&[]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let basis = vec![vec![0.2, 0.7, 0.1], vec![0.5, 0.3, 0.9], vec![0.4, 0.6, 0.05]];
        let up = vec![1.3, -0.4, 2.0];
        let grads = compose_mask_backward(&basis, &up).unwrap();
        let f = |b: &[Vec<f64>]| -> f64 { compose_mask(b).unwrap().iter().zip(&up).map(|(x, u)| x * u).sum() };
        let h = 1e-6;
        for k in 0..3 {
            for s in 0..3 {
                let mut p = basis.clone();
                p[k][s] += h;
                let mut q = basis.clone();
                q[k][s] -= h;
                let fd = (f(&p) - f(&q)) / (2.0 * h);
                assert!((fd - grads[k][s]).abs() < 1e-8);
            }
        }
    }

    fn unit_vec(m: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..=1.0, m)
    }

    fn binary_vec(m: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(prop_oneof![Just(0.0f64), Just(1.0f64)], m)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn commutative(a in unit_vec(6), b in unit_vec(6)) {
            let ab = prob_sum(&a, &b).unwrap();
            let ba = prob_sum(&b, &a).unwrap();
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn associative(a in unit_vec(6), b in unit_vec(6), c in unit_vec(6)) {
            let left = prob_sum(&prob_sum(&a, &b).unwrap(), &c).unwrap();
            let right = prob_sum(&a, &prob_sum(&b, &c).unwrap()).unwrap();
            for (x, y) in left.iter().zip(&right) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn identity(a in unit_vec(6)) {
            let r = prob_sum(&a, &[0.0; 6]).unwrap();
            for (x, y) in r.iter().zip(&a) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn idempotent_on_binary(a in binary_vec(8)) {
            prop_assert_eq!(prob_sum(&a, &a).unwrap(), a);
        }
    }
}
