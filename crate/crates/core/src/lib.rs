//! Perfect simulation of variable-length and infinite-memory Markov chains by coupling
//! into and from the past.
//!
//! The pieces, bottom up: [`context`] and [`trie`] (contexts, complete suffix dictionaries
//! and piecewise-constant maps), [`kernel`] (transition kernels and their coupling
//! bounds), [`update_rule`] (the interval layout and minimal slices), [`engine`] (the
//! backward recursion and the extended-chain baseline), and [`oracle`] (exact stationary
//! laws for finite-order kernels).
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix the usual choices.

pub mod context;
pub mod engine;
pub mod kernel;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod trie;
pub mod update_rule;

pub use context::{Alphabet, AlphabetError, Context, Symbol};
pub use engine::{
    detect_regeneration, pw_extended, run, run_observed, EngineError, EngineState, IterationRecord, Limits,
    RunDiagnostics, RunOutput, Step, WindowCodec, WindowSet, WindowTrie,
};
pub use kernel::{
    expected_depth_bound, min_mass, AnyKernel, ContextTreeKernel, DepthBound, Distribution, KernelError, LowerBoundRow,
    RenewalSqrtKernel, TransitionKernel, TreeFamily,
};
pub use rng::{RngStream, GENERATOR};
pub use scalar::{Real, Scalar};
pub use trie::{dominates, is_csd, prefix_closure, CsdTrie, LabeledTrie, TrieError};
pub use update_rule::{
    build_slice, build_slice_with, interval_table, phi, verify_measure, DepthOverflow, IntervalAssignment, Phi,
    SliceLabel, UpdateError, UpdateSlice,
};

pub use num_rational::Rational64;

/// Kernel of any built-in family in double precision.
pub type Kernel64 = AnyKernel<f64>;
/// Kernel of any built-in family in single precision.
pub type Kernel32 = AnyKernel<f32>;
pub type ContextTreeKernel64 = ContextTreeKernel<f64>;
pub type RenewalSqrtKernel64 = RenewalSqrtKernel<f64>;
/// Context tree with exact rational probabilities; interval ends are then exact too.
pub type ExactContextTreeKernel = ContextTreeKernel<Rational64>;
pub type Distribution64 = Distribution<f64>;
pub type UpdateSlice64 = UpdateSlice<f64>;
