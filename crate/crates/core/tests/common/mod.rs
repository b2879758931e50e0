//! Random complete suffix dictionaries and kernels for property tests.
#![allow(dead_code)]

use ciaftp_core::{Alphabet, Context, ContextTreeKernel, CsdTrie, Distribution, Symbol};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Leaves of a random complete dictionary: each node below `max_depth` splits with
/// probability `split`.
pub fn random_csd(rng: &mut ChaCha8Rng, arity: usize, max_depth: usize, split: f64) -> Vec<Context> {
    let mut leaves = Vec::new();
    let mut stack = vec![Vec::<Symbol>::new()];
    while let Some(recent_first) = stack.pop() {
        let forced = recent_first.is_empty() && max_depth > 0;
        if recent_first.len() < max_depth && (forced || unit(rng) < split) {
            for g in 0..arity {
                let mut p = recent_first.clone();
                p.push(Symbol(g as u16));
                stack.push(p);
            }
        } else {
            leaves.push(Context::from_recent_first(recent_first));
        }
    }
    leaves
}

/// Random law; each entry is zero with probability `zeros`.
pub fn random_distribution(rng: &mut ChaCha8Rng, arity: usize, zeros: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..arity)
        .map(|_| if unit(rng) < zeros { 0.0 } else { unit(rng) + 1e-3 })
        .collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        let mut p = vec![0.0; arity];
        p[0] = 1.0;
        return p;
    }
    w.iter().map(|x| x / total).collect()
}

/// Occasional zero probabilities exercise empty intervals.
pub fn random_kernel(seed: u64, arity: usize, max_depth: usize) -> ContextTreeKernel<f64> {
    random_kernel_with(seed, arity, max_depth, 0.1)
}

/// All transitions positive, so the extended chain is irreducible and aperiodic.
pub fn random_positive_kernel(seed: u64, arity: usize, max_depth: usize) -> ContextTreeKernel<f64> {
    random_kernel_with(seed, arity, max_depth, 0.0)
}

fn random_kernel_with(seed: u64, arity: usize, max_depth: usize, zeros: f64) -> ContextTreeKernel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves = random_csd(&mut rng, arity, max_depth, 0.6);
    let pairs: Vec<_> = leaves
        .into_iter()
        .map(|c| {
            let p = random_distribution(&mut rng, arity, zeros);
            (c, Distribution::from_f64(&p).unwrap())
        })
        .collect();
    ContextTreeKernel::new(Alphabet::numbered(arity), pairs).unwrap()
}

pub fn random_dictionary(seed: u64, arity: usize, max_depth: usize) -> CsdTrie {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves = random_csd(&mut rng, arity, max_depth, 0.5);
    CsdTrie::from_leaves(arity, leaves.into_iter().map(|c| (c, ()))).unwrap()
}

pub fn random_context(rng: &mut ChaCha8Rng, arity: usize, len: usize) -> Context {
    Context::new(
        (0..len)
            .map(|_| Symbol((rng.next_u64() % arity as u64) as u16))
            .collect(),
    )
}

pub fn desk() -> ContextTreeKernel<f64> {
    ContextTreeKernel::binary(&[("0", 0.3), ("01", 0.6), ("11", 0.9)]).unwrap()
}
