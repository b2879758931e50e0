//! Exact stationary window laws for finite-order kernels, and the statistical check of
//! engine output against them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::context::Context;
use crate::engine::{pw_extended, run, EngineError, Limits, WindowCodec};
use crate::kernel::{KernelError, TransitionKernel};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Largest extended state space the oracle builds.
pub const STATE_GUARD: usize = 1_000_000;
/// Largest state space solved densely; power iteration beyond.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("extended chain would have {states} states (guard {guard})")]
    StateSpaceGuard { states: f64, guard: usize },
    #[error("kernel has infinite memory; no finite extended chain")]
    NotFiniteOrder,
    #[error("extended chain is reducible: state {0} is not mutually reachable from state 0")]
    Reducible(usize),
    #[error("extended chain is periodic with period {0}")]
    Periodic(usize),
    #[error("window of {window} symbols is longer than the chain order {order}")]
    WindowTooLong { window: usize, order: usize },
    #[error("power iteration did not reach {tol} within {iterations} iterations")]
    NoConvergence { tol: f64, iterations: usize },
    #[error("linear system for the stationary law is singular")]
    Singular,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// The order-`d` process as a first-order chain on `d`-tuples.
///
/// States are numbered like windows (oldest symbol most significant); from state `s`,
/// symbol `g` leads to `(s·|G| + g) mod |G|^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedChain {
    arity: usize,
    order: usize,
    /// `P(g | s)` at index `s·|G| + g`.
    probs: Vec<f64>,
}

impl ExtendedChain {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn states(&self) -> usize {
        self.probs.len() / self.arity
    }

    pub fn successor(&self, s: usize, g: usize) -> usize {
        (s * self.arity + g) % self.states()
    }

    pub fn prob(&self, s: usize, g: usize) -> f64 {
        self.probs[s * self.arity + g]
    }

    /// Dense transition matrix, row = from.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.states();
        let mut m = DMatrix::zeros(n, n);
        for s in 0..n {
            for g in 0..self.arity {
                m[(s, self.successor(s, g))] += self.prob(s, g);
            }
        }
        m
    }

    /// `π ↦ πT`.
    pub fn apply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; pi.len()];
        for (s, &p) in pi.iter().enumerate() {
            if p != 0.0 {
                for g in 0..self.arity {
                    out[self.successor(s, g)] += p * self.prob(s, g);
                }
            }
        }
        out
    }
}

/// Extended chain at the kernel's own order (at least 1).
pub fn build_extended<T: Scalar, K: TransitionKernel<T>>(kernel: &K) -> Result<ExtendedChain, OracleError> {
    let d = kernel.order().ok_or(OracleError::NotFiniteOrder)?;
    build_extended_at(kernel, d.max(1))
}

/// Extended chain on `order`-tuples; `order` must be at least the kernel's order.
pub fn build_extended_at<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    order: usize,
) -> Result<ExtendedChain, OracleError> {
    let d = kernel.order().ok_or(OracleError::NotFiniteOrder)?;
    assert!(order >= d.max(1), "extended order below the kernel order");
    let arity = kernel.alphabet().size();
    let states = (arity as f64).powi(order as i32);
    if states > STATE_GUARD as f64 {
        return Err(OracleError::StateSpaceGuard {
            states,
            guard: STATE_GUARD,
        });
    }
    let codec = WindowCodec::new(arity, order).expect("guarded above");
    let mut probs = Vec::with_capacity(states as usize * arity);
    for s in 0..states as u64 {
        let ctx = Context::new(codec.decode(s));
        let row = kernel
            .transition(&ctx)?
            .expect("contexts of the kernel order resolve it");
        probs.extend(row.iter().map(|p| p.as_f64()));
    }
    Ok(ExtendedChain { arity, order, probs })
}

/// Every state is reachable from state 0 and reaches it back.
pub fn check_irreducible(chain: &ExtendedChain) -> Result<(), OracleError> {
    let n = chain.states();
    let mut forward = vec![false; n];
    let mut backward = vec![false; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        for g in 0..chain.arity {
            if chain.prob(s, g) > 0.0 {
                preds[chain.successor(s, g)].push(s);
            }
        }
    }
    let mut stack = vec![0];
    forward[0] = true;
    while let Some(s) = stack.pop() {
        for g in 0..chain.arity {
            let t = chain.successor(s, g);
            if chain.prob(s, g) > 0.0 && !forward[t] {
                forward[t] = true;
                stack.push(t);
            }
        }
    }
    stack.push(0);
    backward[0] = true;
    while let Some(s) = stack.pop() {
        for &p in &preds[s] {
            if !backward[p] {
                backward[p] = true;
                stack.push(p);
            }
        }
    }
    match (0..n).find(|&s| !(forward[s] && backward[s])) {
        Some(s) => Err(OracleError::Reducible(s)),
        None => Ok(()),
    }
}

/// Period of an irreducible chain: gcd of `level(s) + 1 - level(t)` over all edges.
pub fn period(chain: &ExtendedChain) -> usize {
    let n = chain.states();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(s) = queue.pop_front() {
        for g in 0..chain.arity {
            let t = chain.successor(s, g);
            if chain.prob(s, g) > 0.0 && level[t] == usize::MAX {
                level[t] = level[s] + 1;
                queue.push_back(t);
            }
        }
    }
    let mut p = 0usize;
    for s in 0..n {
        for g in 0..chain.arity {
            let t = chain.successor(s, g);
            if chain.prob(s, g) > 0.0 && level[s] != usize::MAX {
                p = gcd(p, (level[s] + 1).abs_diff(level[t]));
            }
        }
    }
    p
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_mixing(chain: &ExtendedChain) -> Result<(), OracleError> {
    check_irreducible(chain)?;
    match period(chain) {
        1 => Ok(()),
        p => Err(OracleError::Periodic(p)),
    }
}

/// The stationary law: dense solve up to [`DENSE_LIMIT`] states, power iteration beyond.
pub fn stationary(chain: &ExtendedChain, tol: f64) -> Result<Vec<f64>, OracleError> {
    if chain.states() <= DENSE_LIMIT {
        stationary_dense(chain)
    } else {
        stationary_power(chain, tol)
    }
}

/// Solves `π(T - I) = 0` with one equation replaced by `Σπ = 1`.
pub fn stationary_dense(chain: &ExtendedChain) -> Result<Vec<f64>, OracleError> {
    check_mixing(chain)?;
    let n = chain.states();
    let mut a = chain.matrix().transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(OracleError::Singular)?;
    Ok(x.iter().map(|&p| p.max(0.0)).collect())
}

/// Iterates `π ← πT` from the uniform law until successive iterates differ by less than
/// `tol` in L1.
pub fn stationary_power(chain: &ExtendedChain, tol: f64) -> Result<Vec<f64>, OracleError> {
    check_mixing(chain)?;
    const MAX_ITER: usize = 1_000_000;
    let n = chain.states();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..MAX_ITER {
        let next = chain.apply(&pi);
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < tol {
            let total: f64 = pi.iter().sum();
            return Ok(pi.into_iter().map(|p| p / total).collect());
        }
    }
    Err(OracleError::NoConvergence {
        tol,
        iterations: MAX_ITER,
    })
}

/// `‖πT - π‖₁`.
pub fn stationarity_residual(chain: &ExtendedChain, pi: &[f64]) -> f64 {
    chain.apply(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

/// Law of `m` consecutive symbols, indexed like windows.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowLaw {
    pub length: usize,
    pub probs: Vec<f64>,
}

/// Marginal of `π` on the `m` most recent coordinates.
pub fn window_law(chain: &ExtendedChain, pi: &[f64], m: usize) -> Result<WindowLaw, OracleError> {
    if m > chain.order {
        return Err(OracleError::WindowTooLong {
            window: m,
            order: chain.order,
        });
    }
    let cells = chain.arity.pow(m as u32);
    let mut probs = vec![0.0; cells];
    for (s, &p) in pi.iter().enumerate() {
        probs[s % cells] += p;
    }
    Ok(WindowLaw { length: m, probs })
}

/// `½ Σ |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions on different supports");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Exact stationary law of `L` consecutive symbols, via the extended chain of order
/// `max(d, L, 1)`.
pub fn oracle_window_law<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    length: usize,
) -> Result<WindowLaw, OracleError> {
    let d = kernel.order().ok_or(OracleError::NotFiniteOrder)?;
    let chain = build_extended_at(kernel, d.max(length).max(1))?;
    let pi = stationary(&chain, 1e-12)?;
    window_law(&chain, &pi, length)
}

/// `max(3·√(|G|^L / N), 0.005)`.
pub fn tolerance(cells: usize, runs: usize) -> f64 {
    (3.0 * (cells as f64 / runs as f64).sqrt()).max(0.005)
}

/// Which sampler a validation drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    Ciaftp,
    PwExtended,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ciaftp => "ciaftp",
            Algorithm::PwExtended => "pw_extended",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationCell {
    pub window_id: u64,
    pub expected: f64,
    pub count: u64,
    pub observed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub tv: f64,
    pub tolerance: f64,
    pub n_runs: usize,
    pub n_failed: usize,
    /// Error codes of failed runs with their counts.
    pub failures: Vec<(&'static str, usize)>,
    pub passed: bool,
    pub cells: Vec<ValidationCell>,
}

/// Compares window counts from `n_runs` runs (of which `n_failed` failed) with `law`.
pub fn compare(
    law: &WindowLaw,
    counts: &[u64],
    n_runs: usize,
    failures: Vec<(&'static str, usize)>,
) -> ValidationReport {
    let n_failed: usize = failures.iter().map(|(_, c)| c).sum();
    let ok = (n_runs - n_failed).max(1) as f64;
    let observed: Vec<f64> = counts.iter().map(|&c| c as f64 / ok).collect();
    let tv = tv_distance(&observed, &law.probs);
    let tolerance = tolerance(law.probs.len(), n_runs);
    let cells = law
        .probs
        .iter()
        .zip(counts)
        .zip(&observed)
        .enumerate()
        .map(|(i, ((&expected, &count), &observed))| ValidationCell {
            window_id: i as u64,
            expected,
            count,
            observed,
        })
        .collect();
    ValidationReport {
        tv,
        tolerance,
        n_runs,
        n_failed,
        failures,
        passed: n_failed == 0 && tv <= tolerance,
        cells,
    }
}

/// Runs `n_runs` independent samples (run `i` seeded `seed + i`) and compares their
/// window law with the oracle.
pub fn validate<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    length: usize,
    n_runs: usize,
    seed: u64,
    limits: &Limits,
) -> Result<ValidationReport, OracleError> {
    validate_with(kernel, length, n_runs, seed, limits, Algorithm::Ciaftp)
}

pub fn validate_with<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    length: usize,
    n_runs: usize,
    seed: u64,
    limits: &Limits,
    algorithm: Algorithm,
) -> Result<ValidationReport, OracleError> {
    let law = oracle_window_law(kernel, length)?;
    let results: Vec<Result<u64, &'static str>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_run(seed, i);
            let out = match algorithm {
                Algorithm::Ciaftp => run(kernel, length, &mut rng, limits),
                Algorithm::PwExtended => pw_extended(kernel, length, &mut rng, limits),
            };
            out.map(|o| o.window_id).map_err(|e| e.code())
        })
        .collect();
    let mut counts = vec![0u64; law.probs.len()];
    let mut failures: Vec<(&'static str, usize)> = Vec::new();
    for r in results {
        match r {
            Ok(id) => counts[id as usize] += 1,
            Err(code) => match failures.iter_mut().find(|(c, _)| *c == code) {
                Some((_, n)) => *n += 1,
                None => failures.push((code, 1)),
            },
        }
    }
    Ok(compare(&law, &counts, n_runs, failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Alphabet;
    use crate::kernel::{ContextTreeKernel, Distribution, RenewalSqrtKernel};

    fn order_one() -> ContextTreeKernel<f64> {
        ContextTreeKernel::binary(&[("0", 0.3), ("1", 0.4)]).unwrap()
    }

    fn desk() -> ContextTreeKernel<f64> {
        ContextTreeKernel::binary(&[("0", 0.3), ("01", 0.6), ("11", 0.9)]).unwrap()
    }

    #[test]
    fn order_one_matrix_and_law() {
        let chain = build_extended(&order_one()).unwrap();
        let m = chain.matrix();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.6, 0.4]));
        let pi = stationary(&chain, 1e-12).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12 && (pi[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn memoryless_rows_equal() {
        let k =
            ContextTreeKernel::<f64>::memoryless(Alphabet::binary(), Distribution::from_f64(&[0.25, 0.75]).unwrap())
                .unwrap();
        let chain = build_extended(&k).unwrap();
        assert_eq!(chain.order(), 1);
        assert_eq!(chain.matrix(), DMatrix::from_row_slice(2, 2, &[0.25, 0.75, 0.25, 0.75]));
        let law = oracle_window_law(&k, 2).unwrap();
        let want = [0.0625, 0.1875, 0.1875, 0.5625];
        assert!(tv_distance(&law.probs, &want) < 1e-12);
    }

    #[test]
    fn desk_matrix_read_from_leaves() {
        let chain = build_extended(&desk()).unwrap();
        // State (x_{-2}, x_{-1}); rows 00 and 10 use leaf 0, row 01 leaf 01, row 11 leaf 11.
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.7, 0.3, 0.0, 0.0, //
                0.0, 0.0, 0.4, 0.6, //
                0.7, 0.3, 0.0, 0.0, //
                0.0, 0.0, 0.1, 0.9,
            ],
        );
        assert!((chain.matrix() - want).abs().max() < 1e-15);
    }

    #[test]
    fn dense_and_power_agree() {
        for k in [desk(), order_one()] {
            for order in 1..=4 {
                if order < k.depth() {
                    continue;
                }
                let chain = build_extended_at(&k, order).unwrap();
                let a = stationary_dense(&chain).unwrap();
                let b = stationary_power(&chain, 1e-14).unwrap();
                assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-10));
                assert!(stationarity_residual(&chain, &a) < 1e-10);
                assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let a = Alphabet::numbered(3);
        let leaves = a.symbols().map(|g| {
            let mut p = vec![0.2; 3];
            p[g.index()] = 0.6;
            (Context::new(vec![g]), Distribution::<f64>::from_f64(&p).unwrap())
        });
        let k = ContextTreeKernel::new(a.clone(), leaves).unwrap();
        let pi = stationary(&build_extended(&k).unwrap(), 1e-12).unwrap();
        assert!(pi.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn marginals_are_consistent_across_orders() {
        let k = desk();
        let c2 = build_extended_at(&k, 2).unwrap();
        let c4 = build_extended_at(&k, 4).unwrap();
        let p2 = stationary(&c2, 1e-12).unwrap();
        let p4 = stationary(&c4, 1e-12).unwrap();
        for m in 0..=2 {
            let a = window_law(&c2, &p2, m).unwrap();
            let b = window_law(&c4, &p4, m).unwrap();
            assert!(tv_distance(&a.probs, &b.probs) < 1e-12);
        }
        assert!(matches!(
            window_law(&c2, &p2, 3),
            Err(OracleError::WindowTooLong { .. })
        ));
    }

    #[test]
    fn desk_marginal_matches_long_run_frequency() {
        let k = desk();
        let law = oracle_window_law(&k, 1).unwrap();
        let mut rng = RngStream::new(9);
        let (mut prev2, mut prev1) = (0usize, 0usize);
        let n = 200_000;
        let mut ones = 0;
        for _ in 0..n {
            let p1 = match (prev2, prev1) {
                (_, 0) => 0.3,
                (0, 1) => 0.6,
                _ => 0.9,
            };
            let x = (rng.next_f64() < p1) as usize;
            ones += x;
            prev2 = prev1;
            prev1 = x;
        }
        assert!((ones as f64 / n as f64 - law.probs[1]).abs() < 0.01);
    }

    #[test]
    fn degenerate_chains_are_rejected() {
        // Deterministic alternation: period 2.
        let alt = ContextTreeKernel::<f64>::binary(&[("0", 1.0), ("1", 0.0)]).unwrap();
        assert_eq!(
            stationary(&build_extended(&alt).unwrap(), 1e-12),
            Err(OracleError::Periodic(2))
        );
        // State 1 is absorbing.
        let absorbing = ContextTreeKernel::<f64>::binary(&[("0", 0.5), ("1", 1.0)]).unwrap();
        assert!(matches!(
            stationary(&build_extended(&absorbing).unwrap(), 1e-12),
            Err(OracleError::Reducible(_))
        ));
        assert_eq!(
            build_extended(&RenewalSqrtKernel::<f64>::new()),
            Err(OracleError::NotFiniteOrder)
        );
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.25, 0.75]), 0.25);
    }

    #[test]
    fn small_validation_passes_and_is_ordered() {
        let k = desk();
        let a = validate(&k, 2, 20_000, 1, &Limits::default()).unwrap();
        assert!(a.passed, "{a:?}");
        let b = validate(&k, 2, 20_000, 1, &Limits::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(tolerance(4, 1_000_000), 0.006);
        assert_eq!(tolerance(2, 10_000_000), 0.005);
    }
}
