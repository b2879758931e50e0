//! Worst-case coupling masses and the depth bound they imply.

use crate::scalar::Scalar;

use super::{KernelError, TransitionKernel};

/// Largest number of depth-`k` contexts [`min_mass`] will enumerate.
pub const ENUMERATION_GUARD: u64 = 10_000_000;

/// `A_k^-`: the smallest coupling mass over all contexts of length `k`.
pub fn min_mass<T: Scalar, K: TransitionKernel<T>>(kernel: &K, k: usize) -> Result<T, KernelError> {
    if let Some(v) = kernel.min_mass_closed_form(k) {
        return Ok(v);
    }
    let size = kernel.alphabet().size();
    let count = (size as f64).powi(k as i32);
    if count > ENUMERATION_GUARD as f64 {
        return Err(KernelError::EnumerationGuard {
            alphabet: size,
            depth: k,
            guard: ENUMERATION_GUARD,
        });
    }
    let mut buf = vec![T::zero(); size];
    let mut best: Option<T> = None;
    let mut stack = vec![(kernel.root(), 0usize)];
    while let Some((cursor, depth)) = stack.pop() {
        if depth == k {
            kernel.bounds_into(&cursor, &mut buf);
            let mass = buf.iter().fold(T::zero(), |acc, &x| acc + x);
            best = Some(match best {
                Some(b) => b.min_of(mass),
                None => mass,
            });
            continue;
        }
        for g in kernel.alphabet().symbols() {
            stack.push((kernel.extend(&cursor, g), depth + 1));
        }
    }
    Ok(best.expect("at least one context"))
}

/// Truncated expected-depth bound and the regeneration-sum diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthBound {
    /// `Σ_{k=1}^{L} (1 - Π_{j=k}^{k_max} A_j^-)`, the tail beyond `k_max` taken as 1.
    pub bound: f64,
    /// `A_k^-` for `k = 0..=k_max`.
    pub min_masses: Vec<f64>,
    /// Partial sum `Σ_{m ≤ k_max} Π_{k ≤ m} A_k^-`.
    pub regeneration_sum: f64,
    /// True when that sum is numerically finite, i.e. when the regeneration-based
    /// criterion does not guarantee termination.
    pub regeneration_sum_finite: bool,
}

/// Bound on the expected depth of the engine's dictionary for a window of `window_len`
/// symbols, with products truncated at `k_max`.
pub fn expected_depth_bound<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    window_len: usize,
    k_max: usize,
) -> Result<DepthBound, KernelError> {
    let order = kernel.order();
    let mut min_masses = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let v = match order {
            Some(d) if k >= d => 1.0,
            _ => min_mass(kernel, k)?.as_f64(),
        };
        min_masses.push(v);
    }
    let bound = (1..=window_len)
        .map(|k| {
            let tail: f64 = min_masses.get(k..).map_or(1.0, |s| s.iter().product());
            1.0 - tail
        })
        .sum();

    let mut prod = 1.0;
    let mut regeneration_sum = 0.0;
    for &a in &min_masses {
        prod *= a;
        regeneration_sum += prod;
    }
    // A divergent sum keeps the last terms from vanishing; m·Π_m ≥ 1e-6 is treated as such.
    let regeneration_sum_finite = (k_max as f64 + 1.0) * prod < 1e-6;
    Ok(DepthBound {
        bound,
        min_masses,
        regeneration_sum,
        regeneration_sum_finite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Alphabet;
    use crate::kernel::{ContextTreeKernel, Distribution, RenewalSqrtKernel};

    /// Brute force over every context of length `k`, independent of cursors.
    fn brute_min_mass(kernel: &ContextTreeKernel<f64>, k: usize) -> f64 {
        kernel
            .alphabet()
            .all_contexts(k)
            .iter()
            .map(|c| kernel.lower_bounds(c).unwrap().mass)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn renewal_closed_form() {
        let k = RenewalSqrtKernel::<f64>::new();
        assert_eq!(min_mass(&k, 3).unwrap(), 0.5);
        assert_eq!(min_mass(&k, 0).unwrap(), 0.0);
    }

    #[test]
    fn memoryless_is_one() {
        let k =
            ContextTreeKernel::<f64>::memoryless(Alphabet::binary(), Distribution::from_f64(&[0.25, 0.75]).unwrap())
                .unwrap();
        for d in 0..5 {
            assert_eq!(min_mass(&k, d).unwrap(), 1.0);
        }
        let b = expected_depth_bound(&k, 5, 10).unwrap();
        assert_eq!(b.bound, 0.0);
        assert!(!b.regeneration_sum_finite);
    }

    #[test]
    fn enumeration_matches_brute_force_and_is_monotone() {
        let k = ContextTreeKernel::<f64>::binary(&[("0", 0.3), ("001", 0.2), ("101", 0.7), ("11", 0.9)]).unwrap();
        let mut prev = 0.0;
        for d in 0..5 {
            let m = min_mass(&k, d).unwrap();
            assert_eq!(m, brute_min_mass(&k, d));
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn renewal_sum_is_finite() {
        let k = RenewalSqrtKernel::<f64>::new();
        let b = expected_depth_bound(&k, 1, 64).unwrap();
        assert!(b.regeneration_sum_finite);
        assert_eq!(b.regeneration_sum, 0.0);
        assert!(b.bound > 0.0 && b.bound <= 1.0);
    }

    #[test]
    fn order_one_bound_is_zero() {
        let k = ContextTreeKernel::<f64>::binary(&[("0", 0.3), ("1", 0.4)]).unwrap();
        let b = expected_depth_bound(&k, 4, 10).unwrap();
        assert_eq!(b.bound, 0.0);
        assert!(b.bound <= 1.0 - b.min_masses[0]);
    }

    #[test]
    fn guard_trips_on_deep_trees() {
        // Caterpillar dictionary 0, 01, 011, ..., 01^24, 1^25.
        let mut words: Vec<(String, f64)> = (0..25).map(|r| (format!("0{}", "1".repeat(r)), 0.5)).collect();
        words.push(("1".repeat(25), 0.5));
        let refs: Vec<(&str, f64)> = words.iter().map(|(w, p)| (w.as_str(), *p)).collect();
        let k = ContextTreeKernel::<f64>::binary(&refs).unwrap();
        assert!(min_mass(&k, 20).is_ok());
        assert!(matches!(min_mass(&k, 24), Err(KernelError::EnumerationGuard { .. })));
        assert_eq!(min_mass(&k, 25).unwrap(), 1.0);
    }
}
