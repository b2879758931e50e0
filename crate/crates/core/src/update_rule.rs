//! The coupling update rule: interval layout, evaluation, and minimal slices.
//!
//! Level `k` of a history `w` owns `[A_{k-1}, A_k)`, cut into one half-open piece per
//! symbol in alphabet order, piece `g` having length `a_k(g|w_{-k:-1}) - a_{k-1}(g|w_{-k+1:-1})`.
//! All three entry points ([`interval_table`], [`phi`], [`build_slice`]) lay a level out
//! through [`layout_level`], so a draw is classified identically everywhere.

use thiserror::Error;

use crate::context::{Context, Symbol};
use crate::kernel::{KernelError, TransitionKernel};
use crate::scalar::Scalar;
use crate::trie::LabeledTrie;

/// Depth cap used when none is given.
pub const DEFAULT_MAX_DEPTH: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UpdateError {
    #[error("slice did not resolve within depth {max_depth} for u = {u}")]
    MaxDepthExceeded { max_depth: usize, u: f64 },
    #[error("draw {0} is outside [0, 1)")]
    DrawOutOfRange(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// One piece `[alpha, beta)` of the layout, labeled by its level and symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalAssignment<T> {
    pub level: usize,
    pub symbol: Symbol,
    pub alpha: T,
    pub beta: T,
}

/// Lays out one level.
///
/// `prev_a`/`prev_end` describe level `k-1` (zeros and zero for the root level), `cur_a`
/// the bounds at level `k`. Calls `emit(g, alpha, beta)` in symbol order and returns the
/// level's upper end. On a resolving level the end is pinned to one: the rounding gap
/// `[Σ, 1)` is given to the last symbol of positive probability.
pub fn layout_level<T: Scalar>(
    prev_a: &[T],
    prev_end: T,
    cur_a: &[T],
    resolved: bool,
    mut emit: impl FnMut(Symbol, T, T),
) -> T {
    let last_positive = if resolved {
        cur_a.iter().rposition(|&a| a > T::zero())
    } else {
        None
    };
    let mut x = prev_end;
    for (g, (&cur, &prev)) in cur_a.iter().zip(prev_a).enumerate() {
        let alpha = x;
        let inc = cur - prev;
        if inc > T::zero() {
            x = x + inc;
        }
        if Some(g) == last_positive && x < T::one() {
            x = T::one();
        }
        emit(Symbol(g as u16), alpha, x);
    }
    x
}

/// Position reached while walking a history level by level.
struct LevelState<C, T> {
    cursor: C,
    a: Vec<T>,
    end: T,
}

impl<C: Clone, T: Scalar> LevelState<C, T> {
    /// Level 0, emitting through `emit`.
    fn root<K: TransitionKernel<T, Cursor = C>>(kernel: &K, emit: impl FnMut(Symbol, T, T)) -> Self {
        let size = kernel.alphabet().size();
        let cursor = kernel.root();
        let mut a = vec![T::zero(); size];
        let resolved = kernel.bounds_into(&cursor, &mut a);
        let zeros = vec![T::zero(); size];
        let end = layout_level(&zeros, T::zero(), &a, resolved, emit);
        Self { cursor, a, end }
    }

    /// The next level along `older`.
    fn child<K: TransitionKernel<T, Cursor = C>>(
        &self,
        kernel: &K,
        older: Symbol,
        emit: impl FnMut(Symbol, T, T),
    ) -> Self {
        let cursor = kernel.extend(&self.cursor, older);
        let mut a = vec![T::zero(); self.a.len()];
        let resolved = kernel.bounds_into(&cursor, &mut a);
        let end = layout_level(&self.a, self.end, &a, resolved, emit);
        Self { cursor, a, end }
    }
}

fn check_symbols<T: Scalar, K: TransitionKernel<T>>(kernel: &K, w: &Context) -> Result<(), KernelError> {
    let size = kernel.alphabet().size();
    match w.symbols().iter().find(|g| g.index() >= size) {
        Some(g) => Err(KernelError::ForeignSymbol(g.0)),
        None => Ok(()),
    }
}

/// All intervals of `w` for levels `0..=|w|`, in (level, symbol) order, stopping after
/// the first level whose upper end exceeds `u_cap` (all levels when `u_cap` is `None`).
pub fn interval_table<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    w: &Context,
    u_cap: Option<T>,
) -> Result<Vec<IntervalAssignment<T>>, KernelError> {
    check_symbols(kernel, w)?;
    let mut out = Vec::new();
    let mut state = LevelState::root(kernel, |symbol, alpha, beta| {
        out.push(IntervalAssignment {
            level: 0,
            symbol,
            alpha,
            beta,
        })
    });
    let stop = |end: T| u_cap.is_some_and(|cap| end > cap);
    if stop(state.end) {
        return Ok(out);
    }
    for (i, g) in w.recent_first().enumerate() {
        state = state.child(kernel, g, |symbol, alpha, beta| {
            out.push(IntervalAssignment {
                level: i + 1,
                symbol,
                alpha,
                beta,
            })
        });
        if stop(state.end) {
            break;
        }
    }
    Ok(out)
}

/// Result of evaluating the update rule on a finite context.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phi {
    /// Every history ending in the context produces this symbol.
    Symbol(Symbol),
    /// `u ≥ A(s)`: the symbol depends on older history.
    NeedsDeeper,
}

fn pick<T: Scalar>(u: T, found: &mut Option<Symbol>) -> impl FnMut(Symbol, T, T) + '_ {
    move |g, alpha, beta| {
        if alpha <= u && u < beta {
            *found = Some(g);
        }
    }
}

/// `φ(u, s)`: the symbol whose interval holds `u` at some level `k ≤ |s|`.
pub fn phi<T: Scalar, K: TransitionKernel<T>>(kernel: &K, u: T, s: &Context) -> Result<Phi, UpdateError> {
    check_draw(u)?;
    check_symbols(kernel, s)?;
    let mut found = None;
    let mut state = LevelState::root(kernel, pick(u, &mut found));
    if u < state.end {
        return Ok(Phi::Symbol(found.expect("levels tile [0, A)")));
    }
    for g in s.recent_first() {
        state = state.child(kernel, g, pick(u, &mut found));
        if u < state.end {
            return Ok(Phi::Symbol(found.expect("levels tile [A_{k-1}, A_k)")));
        }
    }
    Ok(Phi::NeedsDeeper)
}

fn check_draw<T: Scalar>(u: T) -> Result<(), UpdateError> {
    if u >= T::zero() && u < T::one() {
        Ok(())
    } else {
        Err(UpdateError::DrawOutOfRange(u.as_f64()))
    }
}

/// Leaf label of an update slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SliceLabel {
    /// `φ(u, ·)` is this symbol on the whole leaf.
    Next(Symbol),
    /// Left unresolved at the depth cap: any symbol is possible.
    Unresolved,
}

/// What to do when a branch of the slice reaches the depth cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DepthOverflow {
    /// Fail with [`UpdateError::MaxDepthExceeded`].
    Fail,
    /// Stop there with an [`SliceLabel::Unresolved`] leaf.
    #[default]
    Bound,
}

/// The minimal trie `D(u)` of `φ(u, ·)`.
#[derive(Clone, Debug)]
pub struct UpdateSlice<T> {
    pub u: T,
    pub trie: LabeledTrie<SliceLabel>,
    /// Deepest node visited before pruning.
    pub max_depth_reached: usize,
    /// Nodes created by the expansion.
    pub node_touches: u64,
    /// Leaves cut at the depth cap.
    pub unresolved_leaves: u64,
}

impl<T> UpdateSlice<T> {
    pub fn depth(&self) -> usize {
        self.trie.depth()
    }

    /// `D(u) = {ε}`: the next symbol is the same for every past.
    pub fn is_regeneration(&self) -> bool {
        self.trie.is_constant()
    }
}

/// Expands contexts depth-first from the root until `u < A(s)`, labels each leaf with
/// `φ(u, s)`, then prunes to the minimal trie.
pub fn build_slice<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    u: T,
    max_depth: usize,
) -> Result<UpdateSlice<T>, UpdateError> {
    build_slice_with(kernel, u, max_depth, DepthOverflow::Fail)
}

/// [`build_slice`] with an explicit policy for branches that hit `max_depth`.
pub fn build_slice_with<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    u: T,
    max_depth: usize,
    overflow: DepthOverflow,
) -> Result<UpdateSlice<T>, UpdateError> {
    check_draw(u)?;
    let arity = kernel.alphabet().size();
    let mut raw = LabeledTrie::under_construction(arity);
    let mut touches = 1u64;
    let mut deepest = 0usize;
    let mut unresolved = 0u64;

    let mut found = None;
    let root = LevelState::root(kernel, pick(u, &mut found));
    let mut stack = vec![(0u32, root, found, 0usize)];
    while let Some((node, state, found, depth)) = stack.pop() {
        deepest = deepest.max(depth);
        if u < state.end {
            raw.set_leaf(node, SliceLabel::Next(found.expect("levels tile [A_{k-1}, A_k)")));
            continue;
        }
        if depth >= max_depth {
            match overflow {
                DepthOverflow::Fail => {
                    return Err(UpdateError::MaxDepthExceeded {
                        max_depth,
                        u: u.as_f64(),
                    })
                }
                DepthOverflow::Bound => {
                    unresolved += 1;
                    raw.set_leaf(node, SliceLabel::Unresolved);
                    continue;
                }
            }
        }
        let first = raw.expand(node);
        for g in (0..arity).rev() {
            let mut found = None;
            let child = state.child(kernel, Symbol(g as u16), pick(u, &mut found));
            touches += 1;
            stack.push((first + g as u32, child, found, depth + 1));
        }
    }
    let trie = raw.prune_minimal();
    Ok(UpdateSlice {
        u,
        trie,
        max_depth_reached: deepest,
        node_touches: touches,
        unresolved_leaves: unresolved,
    })
}

/// Per-symbol measure check of the layout along a resolving context.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureReport {
    /// Total interval length per symbol.
    pub mass: Vec<f64>,
    /// `P(g|w)` per symbol.
    pub expected: Vec<f64>,
    pub max_error: f64,
    /// Total length of all intervals.
    pub coverage: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("context does not resolve the kernel")]
    NotResolving,
    #[error("symbol {symbol:?} has mass {mass}, expected {expected}")]
    MassMismatch { symbol: Symbol, mass: f64, expected: f64 },
    #[error("interval {0:?} overlaps or leaves a gap before it")]
    Gap(IntervalAssignment<f64>),
    #[error("intervals cover {0}, not [0, 1)")]
    Coverage(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Checks, along a context `w` that resolves the kernel, that the intervals labeled `g`
/// have total length `P(g|w)`, and that all intervals tile `[0, 1)`.
pub fn verify_measure<T: Scalar, K: TransitionKernel<T>>(
    kernel: &K,
    w: &Context,
    tolerance: f64,
) -> Result<MeasureReport, MeasureError> {
    let target = kernel.transition(w)?.ok_or(MeasureError::NotResolving)?;
    let table = interval_table(kernel, w, None)?;
    let size = kernel.alphabet().size();
    let mut mass = vec![0.0; size];
    let mut pieces: Vec<IntervalAssignment<f64>> = table
        .iter()
        .map(|iv| IntervalAssignment {
            level: iv.level,
            symbol: iv.symbol,
            alpha: iv.alpha.as_f64(),
            beta: iv.beta.as_f64(),
        })
        .collect();
    for (iv, exact) in pieces.iter().zip(&table) {
        mass[iv.symbol.index()] += (exact.beta - exact.alpha).as_f64();
    }
    let expected: Vec<f64> = target.iter().map(|p| p.as_f64()).collect();
    let mut max_error: f64 = 0.0;
    for (g, (&m, &e)) in mass.iter().zip(&expected).enumerate() {
        let err = (m - e).abs();
        max_error = max_error.max(err);
        if err > tolerance {
            return Err(MeasureError::MassMismatch {
                symbol: Symbol(g as u16),
                mass: m,
                expected: e,
            });
        }
    }
    pieces.retain(|iv| iv.beta > iv.alpha);
    let mut cursor = 0.0;
    for iv in &pieces {
        if (iv.alpha - cursor).abs() > tolerance {
            return Err(MeasureError::Gap(iv.clone()));
        }
        cursor = iv.beta;
    }
    if (cursor - 1.0).abs() > tolerance {
        return Err(MeasureError::Coverage(cursor));
    }
    Ok(MeasureReport {
        mass,
        expected,
        max_error,
        coverage: cursor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Alphabet;
    use crate::kernel::{ContextTreeKernel, Distribution, RenewalSqrtKernel};
    use num_rational::Rational64;

    fn renewal() -> RenewalSqrtKernel<f64> {
        RenewalSqrtKernel::new()
    }

    #[test]
    fn memoryless_table() {
        let k =
            ContextTreeKernel::memoryless(Alphabet::binary(), Distribution::from_f64(&[0.25, 0.75]).unwrap()).unwrap();
        let t = interval_table(&k, &Context::empty(), None).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(
            (t[0].level, t[0].symbol, t[0].alpha, t[0].beta),
            (0, Symbol(0), 0.0, 0.25)
        );
        assert_eq!(
            (t[1].level, t[1].symbol, t[1].alpha, t[1].beta),
            (0, Symbol(1), 0.25, 1.0)
        );
    }

    #[test]
    fn renewal_table_for_01() {
        let k = renewal();
        let a = Alphabet::binary();
        let t = interval_table(&k, &a.parse("01").unwrap(), None).unwrap();
        let c = 1.0 - 1.0 / 2f64.sqrt();
        let nonempty: Vec<_> = t.iter().filter(|iv| iv.beta > iv.alpha).collect();
        assert_eq!(nonempty.len(), 2);
        assert_eq!((nonempty[0].level, nonempty[0].symbol), (1, Symbol(0)));
        assert_eq!((nonempty[0].alpha, nonempty[0].beta), (0.0, c));
        assert_eq!((nonempty[1].level, nonempty[1].symbol), (2, Symbol(1)));
        assert_eq!((nonempty[1].alpha, nonempty[1].beta), (c, 1.0));
    }

    #[test]
    fn phi_examples() {
        let k = renewal();
        let a = Alphabet::binary();
        assert_eq!(phi(&k, 0.1, &a.parse("1").unwrap()).unwrap(), Phi::Symbol(Symbol(0)));
        assert_eq!(phi(&k, 0.1, &Context::empty()).unwrap(), Phi::NeedsDeeper);
        assert_eq!(phi(&k, 0.0, &Context::empty()).unwrap(), Phi::NeedsDeeper);
        assert_eq!(phi(&k, 0.5, &a.parse("01").unwrap()).unwrap(), Phi::Symbol(Symbol(1)));
        assert!(matches!(
            phi(&k, 1.0, &Context::empty()),
            Err(UpdateError::DrawOutOfRange(_))
        ));
    }

    #[test]
    fn boundary_belongs_to_upper_interval() {
        let k = renewal();
        let a = Alphabet::binary();
        let c = 1.0 - 1.0 / 2f64.sqrt();
        assert_eq!(phi(&k, c, &a.parse("01").unwrap()).unwrap(), Phi::Symbol(Symbol(1)));
        assert_eq!(phi(&k, c, &a.parse("1").unwrap()).unwrap(), Phi::NeedsDeeper);
    }

    #[test]
    fn renewal_slice_at_one_half() {
        let k = renewal();
        let a = Alphabet::binary();
        let s = build_slice(&k, 0.5, DEFAULT_MAX_DEPTH).unwrap();
        let leaves: Vec<(String, SliceLabel)> = s.trie.leaves().into_iter().map(|(c, v)| (a.format(&c), *v)).collect();
        let one = SliceLabel::Next(Symbol(1));
        assert_eq!(
            leaves,
            vec![
                ("0".into(), one),
                ("01".into(), one),
                ("011".into(), one),
                ("0111".into(), one),
                ("1111".into(), SliceLabel::Next(Symbol(0))),
            ]
        );
        assert_eq!(s.depth(), 4);
        assert!(!s.is_regeneration());
    }

    #[test]
    fn memoryless_and_order_one_slices() {
        let m =
            ContextTreeKernel::memoryless(Alphabet::binary(), Distribution::from_f64(&[0.25, 0.75]).unwrap()).unwrap();
        for u in [0.0, 0.1, 0.25, 0.9] {
            let s = build_slice(&m, u, 10).unwrap();
            assert!(s.is_regeneration());
            let want = if u < 0.25 { 0 } else { 1 };
            assert_eq!(s.trie.constant_value(), Some(&SliceLabel::Next(Symbol(want))));
        }
        let o1 = ContextTreeKernel::<f64>::binary(&[("0", 0.3), ("1", 0.4)]).unwrap();
        for i in 0..100 {
            let s = build_slice(&o1, i as f64 / 100.0, 10).unwrap();
            assert!(s.depth() <= 1);
        }
    }

    #[test]
    fn max_depth_policies() {
        let k = renewal();
        assert!(matches!(
            build_slice(&k, 0.99, 50),
            Err(UpdateError::MaxDepthExceeded { max_depth: 50, .. })
        ));
        let s = build_slice_with(&k, 0.99, 50, DepthOverflow::Bound).unwrap();
        assert_eq!(s.unresolved_leaves, 1);
        assert_eq!(s.depth(), 50);
    }

    #[test]
    fn measure_examples() {
        let desk = ContextTreeKernel::<f64>::binary(&[("0", 0.3), ("01", 0.6), ("11", 0.9)]).unwrap();
        let a = Alphabet::binary();
        let r = verify_measure(&desk, &a.parse("01").unwrap(), 1e-9).unwrap();
        assert!((r.mass[1] - 0.6).abs() < 1e-9);
        assert!((r.coverage - 1.0).abs() < 1e-12);

        let k = renewal();
        let r = verify_measure(&k, &a.parse("011").unwrap(), 1e-9).unwrap();
        assert!((r.mass[0] - (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-9);
        assert_eq!(
            verify_measure(&k, &a.parse("11").unwrap(), 1e-9),
            Err(MeasureError::NotResolving)
        );
    }

    #[test]
    fn rational_layout_is_exact() {
        let r = |n: i64, d: i64| Rational64::new(n, d);
        let a = Alphabet::binary();
        let k = ContextTreeKernel::new(
            a.clone(),
            [
                (
                    a.parse("0").unwrap(),
                    Distribution::new(vec![r(7, 10), r(3, 10)]).unwrap(),
                ),
                (
                    a.parse("01").unwrap(),
                    Distribution::new(vec![r(2, 5), r(3, 5)]).unwrap(),
                ),
                (
                    a.parse("11").unwrap(),
                    Distribution::new(vec![r(1, 10), r(9, 10)]).unwrap(),
                ),
            ],
        )
        .unwrap();
        for w in ["0", "01", "11", "101"] {
            let w = a.parse(w).unwrap();
            let p = k.transition(&w).unwrap().unwrap();
            let table = interval_table(&k, &w, None).unwrap();
            for g in a.symbols() {
                let total = table
                    .iter()
                    .filter(|iv| iv.symbol == g)
                    .fold(r(0, 1), |acc, iv| acc + iv.beta - iv.alpha);
                assert_eq!(total, p[g.index()]);
            }
            assert_eq!(table.last().unwrap().beta, r(1, 1));
        }
    }
}
