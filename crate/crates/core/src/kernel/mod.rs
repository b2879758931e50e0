//! Transition kernels, seen through the lower bounds that drive the coupling.
//!
//! For a finite context `s`, `a(g|s)` is the infimum of `P(g|w)` over all histories
//! `w` ending in `s`, and `A(s)` is their sum. The update rule only ever consumes
//! these quantities, so [`TransitionKernel`] exposes nothing else. Contexts are
//! walked from the most recent symbol backwards through a kernel-specific cursor,
//! which keeps deep descents linear in the depth.

mod coefficients;
mod context_tree;
mod renewal;

use thiserror::Error;

use crate::context::{Alphabet, Context, Symbol};
use crate::scalar::{Real, Scalar};
use crate::trie::TrieError;

pub use coefficients::{expected_depth_bound, min_mass, DepthBound, ENUMERATION_GUARD};
pub use context_tree::{ContextTreeKernel, TreeFamily};
pub use renewal::{RenewalCursor, RenewalSqrtKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("probabilities at context {context:?} sum to {sum}")]
    BadProbability { context: String, sum: f64 },
    #[error("negative or non-finite probability {value} at context {context:?}")]
    NegativeProbability { context: String, value: f64 },
    #[error("distribution has {got} entries for an alphabet of size {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error(transparent)]
    Dictionary(#[from] TrieError),
    #[error("symbol {0} is not in the kernel's alphabet")]
    ForeignSymbol(u16),
    #[error("enumerating {alphabet}^{depth} contexts exceeds the guard of {guard}")]
    EnumerationGuard { alphabet: usize, depth: usize, guard: u64 },
    #[error("operation not supported for this kernel: {0}")]
    Unsupported(&'static str),
    #[error("full Markov kernel of order {order} needs {expected} contexts of that length")]
    NotFullOrder { order: usize, expected: usize },
}

/// A probability vector over an alphabet, validated on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> Distribution<T> {
    /// Rejects negative entries and sums farther than `T::SUM_TOLERANCE` from one.
    /// Nothing is renormalized.
    pub fn new(probs: Vec<T>) -> Result<Self, KernelError> {
        Self::checked(probs, "")
    }

    /// As [`new`](Self::new), naming `context` in errors.
    pub fn checked(probs: Vec<T>, context: &str) -> Result<Self, KernelError> {
        let mut sum = T::zero();
        for &p in &probs {
            let pf = p.as_f64();
            if p < T::zero() || !pf.is_finite() {
                return Err(KernelError::NegativeProbability {
                    context: context.to_string(),
                    value: pf,
                });
            }
            sum = sum + p;
        }
        let s = sum.as_f64();
        if (s - 1.0).abs() > T::SUM_TOLERANCE {
            return Err(KernelError::BadProbability {
                context: context.to_string(),
                sum: s,
            });
        }
        Ok(Self { probs })
    }

    pub fn from_f64(probs: &[f64]) -> Result<Self, KernelError> {
        Self::new(probs.iter().map(|&p| T::of_f64(p)).collect())
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn prob(&self, g: Symbol) -> T {
        self.probs[g.index()]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `|p - q|_TV = 1 - Σ min(p, q)`.
    pub fn tv(&self, other: &Self) -> T {
        let overlap = self
            .probs
            .iter()
            .zip(&other.probs)
            .fold(T::zero(), |acc, (&p, &q)| acc + p.min_of(q));
        T::one() - overlap
    }
}

/// Lower bounds at one context: `a(g|s)` per symbol and their mass `A(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundRow<T> {
    pub context: Context,
    pub a: Vec<T>,
    pub mass: T,
    /// The context determines the next-symbol law: `a(·|s)` is `P(·|w)` for every `w` ending in `s`.
    pub resolved: bool,
}

/// The capability the coupling needs from a kernel.
pub trait TransitionKernel<T: Scalar>: Send + Sync {
    /// Position reached after reading a context from its most recent symbol backwards.
    type Cursor: Clone + Send;

    fn alphabet(&self) -> &Alphabet;

    /// Cursor for the empty context.
    fn root(&self) -> Self::Cursor;

    /// Cursor for `older·s` given the cursor for `s`.
    fn extend(&self, cursor: &Self::Cursor, older: Symbol) -> Self::Cursor;

    /// Writes `a(·|s)` into `out` and reports whether `s` resolves the kernel.
    fn bounds_into(&self, cursor: &Self::Cursor, out: &mut [T]) -> bool;

    /// Memory length when finite: every context of this length resolves the kernel.
    fn order(&self) -> Option<usize>;

    /// Closed form of `A_k^-`, for kernels that have one.
    fn min_mass_closed_form(&self, _k: usize) -> Option<T> {
        None
    }

    fn cursor_at(&self, s: &Context) -> Result<Self::Cursor, KernelError> {
        let size = self.alphabet().size();
        let mut c = self.root();
        for g in s.recent_first() {
            if g.index() >= size {
                return Err(KernelError::ForeignSymbol(g.0));
            }
            c = self.extend(&c, g);
        }
        Ok(c)
    }

    /// Exact infima `a_{|s|}(·|s)` and their mass.
    fn lower_bounds(&self, s: &Context) -> Result<LowerBoundRow<T>, KernelError> {
        let cursor = self.cursor_at(s)?;
        let mut a = vec![T::zero(); self.alphabet().size()];
        let resolved = self.bounds_into(&cursor, &mut a);
        let mass = a.iter().fold(T::zero(), |acc, &x| acc + x);
        Ok(LowerBoundRow {
            context: s.clone(),
            a,
            mass,
            resolved,
        })
    }

    /// `P(·|w)` for a context that resolves the kernel, `None` otherwise.
    fn transition(&self, w: &Context) -> Result<Option<Vec<T>>, KernelError> {
        let row = self.lower_bounds(w)?;
        Ok(row.resolved.then_some(row.a))
    }
}

/// Any of the built-in kernel families.
#[derive(Clone, Debug)]
pub enum AnyKernel<T: Scalar> {
    Tree(ContextTreeKernel<T>),
    RenewalSqrt(RenewalSqrtKernel<T>),
}

#[derive(Clone, Debug)]
pub enum AnyCursor {
    Tree(crate::trie::NodeId),
    Renewal(RenewalCursor),
}

impl<T: Real> AnyKernel<T> {
    pub fn family_name(&self) -> &'static str {
        match self {
            AnyKernel::Tree(k) => k.family().name(),
            AnyKernel::RenewalSqrt(_) => "renewal_sqrt",
        }
    }

    /// Oscillation `η(s)`; only finite context trees support it.
    pub fn oscillation(&self, s: &Context) -> Result<T, KernelError> {
        match self {
            AnyKernel::Tree(k) => k.oscillation(s),
            AnyKernel::RenewalSqrt(_) => Err(KernelError::Unsupported("oscillation of an infinite-memory kernel")),
        }
    }

    pub fn as_tree(&self) -> Option<&ContextTreeKernel<T>> {
        match self {
            AnyKernel::Tree(k) => Some(k),
            AnyKernel::RenewalSqrt(_) => None,
        }
    }
}

impl<T: Real> TransitionKernel<T> for AnyKernel<T> {
    type Cursor = AnyCursor;

    fn alphabet(&self) -> &Alphabet {
        match self {
            AnyKernel::Tree(k) => k.alphabet(),
            AnyKernel::RenewalSqrt(k) => k.alphabet(),
        }
    }

    fn root(&self) -> AnyCursor {
        match self {
            AnyKernel::Tree(k) => AnyCursor::Tree(k.root()),
            AnyKernel::RenewalSqrt(k) => AnyCursor::Renewal(k.root()),
        }
    }

    fn extend(&self, cursor: &AnyCursor, older: Symbol) -> AnyCursor {
        match (self, cursor) {
            (AnyKernel::Tree(k), AnyCursor::Tree(c)) => AnyCursor::Tree(k.extend(c, older)),
            (AnyKernel::RenewalSqrt(k), AnyCursor::Renewal(c)) => AnyCursor::Renewal(k.extend(c, older)),
            _ => unreachable!("cursor from another kernel"),
        }
    }

    fn bounds_into(&self, cursor: &AnyCursor, out: &mut [T]) -> bool {
        match (self, cursor) {
            (AnyKernel::Tree(k), AnyCursor::Tree(c)) => k.bounds_into(c, out),
            (AnyKernel::RenewalSqrt(k), AnyCursor::Renewal(c)) => k.bounds_into(c, out),
            _ => unreachable!("cursor from another kernel"),
        }
    }

    fn order(&self) -> Option<usize> {
        match self {
            AnyKernel::Tree(k) => TransitionKernel::<T>::order(k),
            AnyKernel::RenewalSqrt(k) => TransitionKernel::<T>::order(k),
        }
    }

    fn min_mass_closed_form(&self, k: usize) -> Option<T> {
        match self {
            AnyKernel::Tree(t) => t.min_mass_closed_form(k),
            AnyKernel::RenewalSqrt(r) => r.min_mass_closed_form(k),
        }
    }
}

impl<T: Scalar> From<ContextTreeKernel<T>> for AnyKernel<T> {
    fn from(k: ContextTreeKernel<T>) -> Self {
        AnyKernel::Tree(k)
    }
}

impl<T: Scalar> From<RenewalSqrtKernel<T>> for AnyKernel<T> {
    fn from(k: RenewalSqrtKernel<T>) -> Self {
        AnyKernel::RenewalSqrt(k)
    }
}
