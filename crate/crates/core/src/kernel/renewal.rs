use std::marker::PhantomData;

use crate::context::{Alphabet, Symbol};
use crate::scalar::Real;

use super::TransitionKernel;

/// Binary renewal kernel with infinite memory.
///
/// The law of the next symbol depends on `r`, the number of trailing ones:
/// `P(1 | r = 0) = 1` and `P(0 | r) = 1 - 1/√(r+1)` for `r ≥ 1`. It is continuous but
/// has `A_0 = 0` and a depth tail `P(depth ≥ k) = 1/√k` for its update slices.
#[derive(Clone, Debug)]
pub struct RenewalSqrtKernel<T> {
    alphabet: Alphabet,
    _scalar: PhantomData<T>,
}

/// Position in a context read backwards: still inside a run of ones, or past the
/// first zero with the run length known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenewalCursor {
    Ones(u64),
    Resolved(u64),
}

impl<T: Real> Default for RenewalSqrtKernel<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> RenewalSqrtKernel<T> {
    pub fn new() -> Self {
        Self {
            alphabet: Alphabet::binary(),
            _scalar: PhantomData,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// `1 - 1/√(r+1)`: probability of a zero after exactly `r ≥ 1` ones.
    pub fn zero_prob(r: u64) -> T {
        if r == 0 {
            return T::zero();
        }
        T::one() - T::one() / T::of_f64((r + 1) as f64).sqrt()
    }

    pub(crate) fn root(&self) -> RenewalCursor {
        RenewalCursor::Ones(0)
    }

    pub(crate) fn extend(&self, c: &RenewalCursor, older: Symbol) -> RenewalCursor {
        match *c {
            RenewalCursor::Ones(k) if older.0 == 1 => RenewalCursor::Ones(k + 1),
            RenewalCursor::Ones(k) => RenewalCursor::Resolved(k),
            r @ RenewalCursor::Resolved(_) => r,
        }
    }

    pub(crate) fn bounds_into(&self, c: &RenewalCursor, out: &mut [T]) -> bool {
        match *c {
            // Histories ending in 1^k have r ≥ k, including r = ∞ where P(0) = 1.
            RenewalCursor::Ones(k) => {
                out[0] = Self::zero_prob(k);
                out[1] = T::zero();
                false
            }
            RenewalCursor::Resolved(r) => {
                let p0 = Self::zero_prob(r);
                out[0] = p0;
                out[1] = T::one() - p0;
                true
            }
        }
    }
}

impl<T: Real> TransitionKernel<T> for RenewalSqrtKernel<T> {
    type Cursor = RenewalCursor;

    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn root(&self) -> RenewalCursor {
        RenewalSqrtKernel::root(self)
    }

    fn extend(&self, c: &RenewalCursor, older: Symbol) -> RenewalCursor {
        RenewalSqrtKernel::extend(self, c, older)
    }

    fn bounds_into(&self, c: &RenewalCursor, out: &mut [T]) -> bool {
        RenewalSqrtKernel::bounds_into(self, c, out)
    }

    fn order(&self) -> Option<usize> {
        None
    }

    /// The minimizing context at depth `k` is `1^k`.
    fn min_mass_closed_form(&self, k: usize) -> Option<T> {
        Some(Self::zero_prob(k as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Context;

    #[test]
    fn lower_bound_examples() {
        let k = RenewalSqrtKernel::<f64>::new();
        let a = k.alphabet().clone();
        let eps = k.lower_bounds(&Context::empty()).unwrap();
        assert_eq!((eps.a[0], eps.a[1], eps.mass), (0.0, 0.0, 0.0));

        let one = k.lower_bounds(&a.parse("1").unwrap()).unwrap();
        let expected = 1.0 - 1.0 / 2f64.sqrt();
        assert!((one.a[0] - expected).abs() < 1e-15);
        assert!((one.a[0] - 0.29289).abs() < 1e-5);
        assert_eq!(one.a[1], 0.0);
        assert!(!one.resolved);

        let r = k.lower_bounds(&a.parse("0").unwrap()).unwrap();
        assert_eq!((r.a[0], r.a[1], r.resolved), (0.0, 1.0, true));
        let r2 = k.lower_bounds(&a.parse("1011").unwrap()).unwrap();
        assert!(r2.resolved);
        assert!((r2.a[0] - (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-15);
        assert!((r2.mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn run_of_ones_mass() {
        let k = RenewalSqrtKernel::<f64>::new();
        let a = k.alphabet().clone();
        for n in 1..20 {
            let ctx = a.parse(&"1".repeat(n)).unwrap();
            let row = k.lower_bounds(&ctx).unwrap();
            assert!((row.mass - (1.0 - 1.0 / ((n + 1) as f64).sqrt())).abs() < 1e-15);
        }
    }
}
