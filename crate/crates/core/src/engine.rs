//! Backward composition of update maps until the window map stops depending on the past.
//!
//! The state at time `t ≤ 0` is a labeled trie `H_t`: reading a history ending at
//! `t - 1` from its most recent symbol, it yields the set of windows
//! `(X_{-L}, …, X_{-1})` compatible with that history and the draws `u_t, …, u_{-1}`.
//! Each step prepends one draw: `H_t(w) = H_{t+1}(w·φ(u_t, w))`. The run stops at the
//! first `t` where the map is a single constant window.

use std::time::Instant;

use smallvec::SmallVec;
use thiserror::Error;

use crate::context::{Alphabet, Context, Symbol};
use crate::kernel::{KernelError, TransitionKernel};
use crate::rng::{RngStream, GENERATOR};
use crate::scalar::Scalar;
use crate::trie::{Follow, LabeledTrie};
use crate::update_rule::{build_slice_with, phi, DepthOverflow, Phi, SliceLabel, UpdateError, UpdateSlice};

/// Budgets that turn slow or divergent runs into reported failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_iter: u64,
    pub max_depth: usize,
    /// Largest trie (nodes) allowed in a single step.
    pub max_nodes: usize,
    pub overflow: DepthOverflow,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_iter: 1_000_000,
            max_depth: crate::update_rule::DEFAULT_MAX_DEPTH,
            max_nodes: 10_000_000,
            overflow: DepthOverflow::Bound,
        }
    }
}

/// Numbering of the `|G|^L` windows, oldest symbol most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowCodec {
    arity: u64,
    length: usize,
}

impl WindowCodec {
    /// `None` when `|G|^L` does not fit in 64 bits.
    pub fn new(arity: usize, length: usize) -> Option<Self> {
        (arity as u64).checked_pow(length as u32)?;
        Some(Self {
            arity: arity as u64,
            length,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Number of distinct windows.
    pub fn count(&self) -> u64 {
        self.arity.pow(self.length as u32)
    }

    pub fn encode(&self, oldest_first: &[Symbol]) -> u64 {
        debug_assert_eq!(oldest_first.len(), self.length);
        oldest_first.iter().fold(0, |acc, g| acc * self.arity + g.0 as u64)
    }

    pub fn decode(&self, mut id: u64) -> Vec<Symbol> {
        let mut out = vec![Symbol(0); self.length];
        for slot in out.iter_mut().rev() {
            *slot = Symbol((id % self.arity) as u16);
            id /= self.arity;
        }
        out
    }
}

/// Sorted, duplicate-free set of window ids. Outside of depth-capped slices every
/// set is a singleton.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WindowSet(SmallVec<[u64; 1]>);

impl WindowSet {
    pub fn single(id: u64) -> Self {
        Self(SmallVec::from_buf([id]))
    }

    pub fn union<'a, I: IntoIterator<Item = &'a WindowSet>>(sets: I) -> Self {
        let mut ids: SmallVec<[u64; 1]> = sets.into_iter().flat_map(|s| s.0.iter().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        Self(ids)
    }

    pub fn ids(&self) -> &[u64] {
        &self.0
    }

    pub fn as_single(&self) -> Option<u64> {
        match self.0.as_slice() {
            [id] => Some(*id),
            _ => None,
        }
    }
}

/// Trie of window sets: the map `H_t`.
pub type WindowTrie = LabeledTrie<WindowSet>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationRecord {
    pub t: i64,
    pub leaves: usize,
    pub depth: usize,
    pub node_touches: u64,
    pub slice_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunDiagnostics {
    /// `τ(n)`: the time at which the map became constant (0 while unfinished).
    pub tau: i64,
    pub iterations: u64,
    pub records: Vec<IterationRecord>,
    pub node_touches: u64,
    /// Times `t` whose slice was `{ε}`.
    pub regeneration_times: Vec<i64>,
    /// Slice leaves left unresolved at the depth cap.
    pub unresolved_leaves: u64,
    pub seed: u64,
    pub generator: &'static str,
    pub wall_ns: u64,
}

impl RunDiagnostics {
    fn new(seed: u64) -> Self {
        Self {
            tau: 0,
            iterations: 0,
            records: Vec::new(),
            node_touches: 0,
            regeneration_times: Vec::new(),
            unresolved_leaves: 0,
            seed,
            generator: GENERATOR,
            wall_ns: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("window length must be at least 1")]
    ZeroLength,
    #[error("{alphabet}^{length} windows do not fit in 64 bits")]
    WindowSpaceTooLarge { alphabet: usize, length: usize },
    #[error("no coalescence within {limit} iterations")]
    IterationLimitExceeded {
        limit: u64,
        diagnostics: Box<RunDiagnostics>,
    },
    #[error("slice depth cap {max_depth} reached (resolution lost)")]
    MaxDepthExceeded {
        max_depth: usize,
        diagnostics: Box<RunDiagnostics>,
    },
    #[error("trie of {nodes} nodes exceeds the budget of {limit}")]
    NodeBudgetExceeded {
        limit: usize,
        nodes: usize,
        diagnostics: Box<RunDiagnostics>,
    },
    #[error("the extended-chain baseline needs a kernel of finite order")]
    NotFiniteOrder,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl EngineError {
    /// Short stable identifier, for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::ZeroLength => "zero_length",
            EngineError::WindowSpaceTooLarge { .. } => "window_space_too_large",
            EngineError::IterationLimitExceeded { .. } => "iteration_limit_exceeded",
            EngineError::MaxDepthExceeded { .. } => "max_depth_exceeded",
            EngineError::NodeBudgetExceeded { .. } => "node_budget_exceeded",
            EngineError::NotFiniteOrder => "not_finite_order",
            EngineError::Kernel(_) => "kernel_error",
        }
    }

    /// Diagnostics up to the failure, for budget errors.
    pub fn diagnostics(&self) -> Option<&RunDiagnostics> {
        match self {
            EngineError::IterationLimitExceeded { diagnostics, .. }
            | EngineError::MaxDepthExceeded { diagnostics, .. }
            | EngineError::NodeBudgetExceeded { diagnostics, .. } => Some(diagnostics),
            _ => None,
        }
    }
}

/// Everything one step produced, for observers.
#[derive(Debug)]
pub struct Step<T> {
    /// Time of the draw, i.e. the new current time.
    pub t: i64,
    pub u: T,
    /// STEP 1: the minimal slice `D(u)`.
    pub slice: UpdateSlice<T>,
    /// `H_{t+1}`.
    pub previous: WindowTrie,
    /// STEP 2, before pruning.
    pub expanded: WindowTrie,
    pub node_touches: u64,
}

/// `(t, H_t)` with `H_t` kept minimal.
#[derive(Clone, Debug)]
pub struct EngineState {
    codec: WindowCodec,
    t: i64,
    trie: WindowTrie,
}

impl EngineState {
    /// `t = 0`, `H_0(s) = s` on the complete dictionary `G^L`.
    pub fn init(alphabet: &Alphabet, length: usize) -> Result<Self, EngineError> {
        if length == 0 {
            return Err(EngineError::ZeroLength);
        }
        let codec = WindowCodec::new(alphabet.size(), length).ok_or(EngineError::WindowSpaceTooLarge {
            alphabet: alphabet.size(),
            length,
        })?;
        let trie = LabeledTrie::complete(alphabet.size(), length, |s| {
            WindowSet::single(codec.encode(s.symbols()))
        });
        Ok(Self { codec, t: 0, trie })
    }

    pub fn t(&self) -> i64 {
        self.t
    }

    pub fn codec(&self) -> WindowCodec {
        self.codec
    }

    pub fn trie(&self) -> &WindowTrie {
        &self.trie
    }

    /// The dictionary is `{ε}` with a single window.
    pub fn is_coalesced(&self) -> bool {
        self.sample().is_some()
    }

    pub fn sample(&self) -> Option<u64> {
        self.trie.constant_value().and_then(WindowSet::as_single)
    }

    /// One backward step with draw `u` for time `t - 1`.
    pub fn step<T: Scalar, K: TransitionKernel<T>>(
        &mut self,
        kernel: &K,
        u: T,
        limits: &Limits,
    ) -> Result<Step<T>, UpdateError> {
        debug_assert!(!self.is_coalesced(), "step after coalescence");
        let slice = build_slice_with(kernel, u, limits.max_depth, limits.overflow)?;
        let expanded = LabeledTrie::compose(
            &slice.trie,
            &self.trie,
            |label| match *label {
                SliceLabel::Next(g) => Follow::Symbol(g),
                SliceLabel::Unresolved => Follow::Any,
            },
            |sets| WindowSet::union(sets.iter().copied()),
        );
        let current = expanded.prune_minimal();
        let previous = std::mem::replace(&mut self.trie, current);
        self.t -= 1;
        let node_touches = slice.node_touches + expanded.node_count() as u64;
        Ok(Step {
            t: self.t,
            u,
            slice,
            previous,
            expanded,
            node_touches,
        })
    }
}

/// A finished run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutput {
    pub window: Vec<Symbol>,
    pub window_id: u64,
    pub diagnostics: RunDiagnostics,
}

/// Draws one exact sample of `L` consecutive stationary symbols.
pub fn run<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    length: usize,
    rng: &mut RngStream,
    limits: &Limits,
) -> Result<RunOutput, EngineError> {
    run_observed(kernel, length, rng, limits, |_, _| {})
}

/// [`run`], calling `observer(step, state)` after every step.
pub fn run_observed<T, K, F>(
    kernel: &K,
    length: usize,
    rng: &mut RngStream,
    limits: &Limits,
    mut observer: F,
) -> Result<RunOutput, EngineError>
where
    T: Scalar,
    K: TransitionKernel<T>,
    F: FnMut(&Step<T>, &EngineState),
{
    let start = Instant::now();
    let mut state = EngineState::init(kernel.alphabet(), length)?;
    let mut diag = RunDiagnostics::new(rng.seed());
    loop {
        if diag.iterations >= limits.max_iter {
            let limit = limits.max_iter;
            diag.wall_ns = start.elapsed().as_nanos() as u64;
            return Err(EngineError::IterationLimitExceeded {
                limit,
                diagnostics: Box::new(diag),
            });
        }
        let u = rng.next_uniform::<T>();
        let step = match state.step(kernel, u, limits) {
            Ok(s) => s,
            Err(UpdateError::MaxDepthExceeded { max_depth, .. }) => {
                diag.wall_ns = start.elapsed().as_nanos() as u64;
                return Err(EngineError::MaxDepthExceeded {
                    max_depth,
                    diagnostics: Box::new(diag),
                });
            }
            Err(UpdateError::Kernel(e)) => return Err(e.into()),
            Err(UpdateError::DrawOutOfRange(_)) => unreachable!("draws lie in [0, 1)"),
        };
        diag.iterations += 1;
        diag.node_touches += step.node_touches;
        diag.unresolved_leaves += step.slice.unresolved_leaves;
        if step.slice.is_regeneration() {
            diag.regeneration_times.push(step.t);
        }
        let trie = state.trie();
        diag.records.push(IterationRecord {
            t: step.t,
            leaves: trie.leaf_count(),
            depth: trie.depth(),
            node_touches: step.node_touches,
            slice_depth: step.slice.depth(),
        });
        observer(&step, &state);
        if step.expanded.node_count() > limits.max_nodes {
            let (limit, nodes) = (limits.max_nodes, step.expanded.node_count());
            diag.wall_ns = start.elapsed().as_nanos() as u64;
            return Err(EngineError::NodeBudgetExceeded {
                limit,
                nodes,
                diagnostics: Box::new(diag),
            });
        }
        if let Some(id) = state.sample() {
            diag.tau = state.t();
            diag.wall_ns = start.elapsed().as_nanos() as u64;
            return Ok(RunOutput {
                window: state.codec().decode(id),
                window_id: id,
                diagnostics: diag,
            });
        }
        if state.trie().is_constant() {
            // A depth-capped slice merged several windows into the root.
            diag.wall_ns = start.elapsed().as_nanos() as u64;
            return Err(EngineError::MaxDepthExceeded {
                max_depth: limits.max_depth,
                diagnostics: Box::new(diag),
            });
        }
    }
}

/// Propp–Wilson on the extended chain of a finite-order kernel: `H_t` is kept on the
/// complete dictionary of depth `max(d, L + t)`, evaluated leaf by leaf and never pruned.
/// Uses the same draws as [`run`], so it returns the same window and `τ`.
pub fn pw_extended<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    length: usize,
    rng: &mut RngStream,
    limits: &Limits,
) -> Result<RunOutput, EngineError> {
    let order = kernel.order().ok_or(EngineError::NotFiniteOrder)?;
    let start = Instant::now();
    let arity = kernel.alphabet().size();
    let init = EngineState::init(kernel.alphabet(), length)?;
    let codec = init.codec();
    let mut trie = init.trie;
    let mut diag = RunDiagnostics::new(rng.seed());
    let mut t = 0i64;
    loop {
        if diag.iterations >= limits.max_iter {
            diag.wall_ns = start.elapsed().as_nanos() as u64;
            return Err(EngineError::IterationLimitExceeded {
                limit: limits.max_iter,
                diagnostics: Box::new(diag),
            });
        }
        let u = rng.next_uniform::<T>();
        t -= 1;
        let depth = order.max((length as i64 + t).max(0) as usize);
        let nodes = (0..=depth)
            .map(|i| arity.saturating_pow(i as u32))
            .fold(0usize, usize::saturating_add);
        if nodes > limits.max_nodes {
            diag.wall_ns = start.elapsed().as_nanos() as u64;
            return Err(EngineError::NodeBudgetExceeded {
                limit: limits.max_nodes,
                nodes,
                diagnostics: Box::new(diag),
            });
        }
        let mut failure = None;
        let next = LabeledTrie::complete(arity, depth, |s: &Context| {
            let g = match phi(kernel, u, s) {
                Ok(Phi::Symbol(g)) => g,
                Ok(Phi::NeedsDeeper) => unreachable!("contexts of the kernel order resolve it"),
                Err(e) => {
                    failure.get_or_insert(e);
                    Symbol(0)
                }
            };
            trie.value_at(&s.then(g))
                .expect("previous dictionary is shallower")
                .clone()
        });
        if let Some(UpdateError::Kernel(e)) = failure {
            return Err(e.into());
        }
        trie = next;
        diag.iterations += 1;
        diag.node_touches += trie.node_count() as u64;
        diag.records.push(IterationRecord {
            t,
            leaves: trie.leaf_count(),
            depth,
            node_touches: trie.node_count() as u64,
            slice_depth: 0,
        });
        let leaves = trie.leaves();
        let first = leaves[0].1;
        if leaves.iter().all(|(_, v)| *v == first) {
            if let Some(id) = first.as_single() {
                diag.tau = t;
                diag.wall_ns = start.elapsed().as_nanos() as u64;
                return Ok(RunOutput {
                    window: codec.decode(id),
                    window_id: id,
                    diagnostics: diag,
                });
            }
        }
    }
}

/// True when the slice is `{ε}`: the next symbol does not depend on the past at all.
pub fn detect_regeneration<T>(slice: &UpdateSlice<T>) -> bool {
    slice.is_regeneration()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ContextTreeKernel, Distribution, RenewalSqrtKernel};
    use crate::trie::{dominates, is_csd, prefix_closure};
    use crate::update_rule::build_slice;

    fn desk() -> ContextTreeKernel<f64> {
        ContextTreeKernel::binary(&[("0", 0.3), ("01", 0.6), ("11", 0.9)]).unwrap()
    }

    fn memoryless() -> ContextTreeKernel<f64> {
        ContextTreeKernel::memoryless(Alphabet::binary(), Distribution::from_f64(&[0.25, 0.75]).unwrap()).unwrap()
    }

    fn labels(t: &WindowTrie, a: &Alphabet) -> Vec<(String, Vec<u64>)> {
        t.leaves()
            .into_iter()
            .map(|(c, v)| (a.format(&c), v.ids().to_vec()))
            .collect()
    }

    #[test]
    fn init_examples() {
        let a = Alphabet::binary();
        let s = EngineState::init(&a, 2).unwrap();
        assert_eq!(
            labels(s.trie(), &a),
            vec![
                ("00".into(), vec![0]),
                ("10".into(), vec![2]),
                ("01".into(), vec![1]),
                ("11".into(), vec![3])
            ]
        );
        assert_eq!(
            EngineState::init(&Alphabet::numbered(3), 1)
                .unwrap()
                .trie()
                .leaf_count(),
            3
        );
        assert_eq!(EngineState::init(&a, 0).unwrap_err(), EngineError::ZeroLength);
    }

    #[test]
    fn codec_round_trip() {
        let c = WindowCodec::new(3, 4).unwrap();
        for id in 0..c.count() {
            assert_eq!(c.encode(&c.decode(id)), id);
        }
        assert_eq!(c.encode(&[Symbol(0), Symbol(0), Symbol(1), Symbol(2)]), 5);
        assert!(WindowCodec::new(2, 64).is_none());
    }

    /// A small transition worked out by hand.
    #[test]
    fn composition_by_hand() {
        let a = Alphabet::binary();
        let ctx = |s: &str| a.parse(s).unwrap();
        // H_{t+1}: 0 -> 10, 01 -> 20, 11 -> 30 (arbitrary tags).
        let prev = LabeledTrie::from_leaves(2, [(ctx("0"), 10u64), (ctx("01"), 20), (ctx("11"), 30)]).unwrap();
        let next = |g: u16| SliceLabel::Next(Symbol(g));
        let follow = |l: &SliceLabel| match *l {
            SliceLabel::Next(g) => Follow::Symbol(g),
            SliceLabel::Unresolved => Follow::Any,
        };
        let union = |v: &[&u64]| v.iter().map(|x| **x).max().unwrap();

        // Every leaf resolves directly: "01" followed by 1 reads 011 -> leaf 11.
        let slice =
            LabeledTrie::from_leaves(2, [(ctx("0"), next(1)), (ctx("01"), next(1)), (ctx("11"), next(0))]).unwrap();
        let e = LabeledTrie::compose(&slice, &prev, follow, union);
        let got: Vec<_> = e.leaves().into_iter().map(|(c, v)| (a.format(&c), *v)).collect();
        assert_eq!(got, vec![("0".into(), 20), ("01".into(), 30), ("11".into(), 10)]);

        // The root leaf followed by 1 lands on an internal node: its subtree is grafted.
        let slice = LabeledTrie::leaf(2, next(1));
        let e = LabeledTrie::compose(&slice, &prev, follow, union);
        let got: Vec<_> = e.leaves().into_iter().map(|(c, v)| (a.format(&c), *v)).collect();
        assert_eq!(got, vec![("0".into(), 20), ("1".into(), 30)]);

        let slice = LabeledTrie::leaf(2, SliceLabel::Unresolved);
        let e = LabeledTrie::compose(&slice, &prev, follow, union);
        assert_eq!(e.constant_value(), Some(&30));
    }

    #[test]
    fn memoryless_coalesces_after_exactly_l_steps() {
        let k = memoryless();
        for seed in 0..50 {
            let out = run(&k, 3, &mut RngStream::new(seed), &Limits::default()).unwrap();
            assert_eq!(out.diagnostics.tau, -3);
            assert_eq!(out.diagnostics.regeneration_times, vec![-1, -2, -3]);
        }
    }

    #[test]
    fn memoryless_sample_is_the_draws() {
        let k = memoryless();
        let out = run(&k, 3, &mut RngStream::new(11), &Limits::default()).unwrap();
        let mut r = RngStream::new(11);
        // Draws for t = -1, -2, -3 give X_{-1}, X_{-2}, X_{-3}.
        let xs: Vec<Symbol> = (0..3).map(|_| Symbol((r.next_f64() >= 0.25) as u16)).collect();
        assert_eq!(out.window, vec![xs[2], xs[1], xs[0]]);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let k = desk();
        let a = run(&k, 3, &mut RngStream::new(5), &Limits::default()).unwrap();
        let mut b = run(&k, 3, &mut RngStream::new(5), &Limits::default()).unwrap();
        b.diagnostics.wall_ns = a.diagnostics.wall_ns;
        assert_eq!(a, b);
    }

    #[test]
    fn composed_tries_and_depth_recursion_hold_on_desk_runs() {
        let k = desk();
        let closure = prefix_closure(k.tree()).unwrap();
        let length = 3;
        for seed in 0..200 {
            let mut prev_depth = length;
            run_observed(
                &k,
                length,
                &mut RngStream::new(seed),
                &Limits::default(),
                |step, state| {
                    let e = &step.expanded;
                    assert!(e.check_structure().is_ok());
                    assert!(is_csd(2, &e.leaf_contexts()));
                    let before: Vec<&WindowSet> = step.previous.leaves().into_iter().map(|(_, v)| v).collect();
                    for (_, v) in e.leaves() {
                        assert!(v.as_single().is_some());
                        assert!(before.contains(&v));
                    }
                    let depth = state.trie().depth();
                    assert!(depth <= step.slice.depth().max(prev_depth.saturating_sub(1)));
                    prev_depth = depth;
                    if step.t <= -(length as i64) {
                        assert!(dominates(&closure, state.trie()));
                        assert!(state.trie().leaf_count() <= closure.leaf_count());
                    }
                },
            )
            .unwrap();
        }
    }

    #[test]
    fn pw_extended_agrees_with_run() {
        let k = desk();
        for seed in 0..100 {
            let a = run(&k, 3, &mut RngStream::new(seed), &Limits::default()).unwrap();
            let b = pw_extended(&k, 3, &mut RngStream::new(seed), &Limits::default()).unwrap();
            assert_eq!((a.window_id, a.diagnostics.tau), (b.window_id, b.diagnostics.tau));
            assert!(b.diagnostics.node_touches >= a.diagnostics.iterations);
        }
        let r = RenewalSqrtKernel::<f64>::new();
        assert_eq!(
            pw_extended(&r, 1, &mut RngStream::new(0), &Limits::default()).unwrap_err(),
            EngineError::NotFiniteOrder
        );
    }

    #[test]
    fn renewal_runs_terminate() {
        let k = RenewalSqrtKernel::<f64>::new();
        for seed in 0..100 {
            let out = run(&k, 1, &mut RngStream::new(seed), &Limits::default()).unwrap();
            assert!(out.diagnostics.tau <= -1);
            assert!(out.diagnostics.regeneration_times.is_empty());
        }
    }

    #[test]
    fn regeneration_frequency_matches_root_mass() {
        let k = desk();
        let mut rng = RngStream::new(3);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| detect_regeneration(&build_slice(&k, rng.next_f64(), 10).unwrap()))
            .count();
        assert!((hits as f64 / n as f64 - 0.4).abs() < 0.02);
    }

    #[test]
    fn budgets_report_partial_diagnostics() {
        let k = desk();
        let limits = Limits {
            max_iter: 1,
            ..Limits::default()
        };
        let err = run(&k, 3, &mut RngStream::new(0), &limits).unwrap_err();
        assert_eq!(err.code(), "iteration_limit_exceeded");
        assert_eq!(err.diagnostics().unwrap().iterations, 1);

        let limits = Limits {
            max_nodes: 2,
            ..Limits::default()
        };
        let err = run(&k, 3, &mut RngStream::new(0), &limits).unwrap_err();
        assert_eq!(err.code(), "node_budget_exceeded");
    }
}
