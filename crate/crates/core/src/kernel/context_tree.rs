use crate::context::{Alphabet, Context, Symbol};
use crate::scalar::Scalar;
use crate::trie::{Descent, LabeledTrie, NodeId};

use super::{Distribution, KernelError, TransitionKernel};

/// Which constructor produced a [`ContextTreeKernel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeFamily {
    /// A variable-length Markov chain on an arbitrary complete suffix dictionary.
    ContextTree,
    /// Every context of one fixed length.
    FullMarkov(usize),
    /// The dictionary `{ε}`.
    Memoryless,
}

impl TreeFamily {
    pub fn name(self) -> &'static str {
        match self {
            TreeFamily::ContextTree => "context_tree",
            TreeFamily::FullMarkov(_) => "full_markov",
            TreeFamily::Memoryless => "memoryless",
        }
    }
}

/// A finite-memory kernel: one next-symbol distribution per leaf of a dictionary.
///
/// The infimum below every trie node is precomputed, so `a(·|s)` costs one walk.
#[derive(Clone, Debug)]
pub struct ContextTreeKernel<T> {
    alphabet: Alphabet,
    family: TreeFamily,
    tree: LabeledTrie<Distribution<T>>,
    /// Per node: componentwise minimum of the leaf distributions below it.
    floors: Vec<Vec<T>>,
}

impl<T: Scalar> ContextTreeKernel<T> {
    /// A variable-length chain from `(context, distribution)` pairs forming a complete
    /// suffix dictionary.
    pub fn new<I>(alphabet: Alphabet, leaves: I) -> Result<Self, KernelError>
    where
        I: IntoIterator<Item = (Context, Distribution<T>)>,
    {
        let size = alphabet.size();
        let mut checked = Vec::new();
        for (ctx, dist) in leaves {
            if dist.len() != size {
                return Err(KernelError::WrongLength {
                    expected: size,
                    got: dist.len(),
                });
            }
            checked.push((ctx, dist));
        }
        let tree = LabeledTrie::from_leaves(size, checked)?;
        Ok(Self::from_trie(alphabet, TreeFamily::ContextTree, tree))
    }

    /// Order-`order` chain: `dists` lists one distribution per context of that length.
    pub fn full_markov<I>(alphabet: Alphabet, order: usize, leaves: I) -> Result<Self, KernelError>
    where
        I: IntoIterator<Item = (Context, Distribution<T>)>,
    {
        let leaves: Vec<_> = leaves.into_iter().collect();
        let expected = alphabet.size().pow(order as u32);
        if leaves.len() != expected || leaves.iter().any(|(c, _)| c.len() != order) {
            return Err(KernelError::NotFullOrder { order, expected });
        }
        let mut k = Self::new(alphabet, leaves)?;
        k.family = TreeFamily::FullMarkov(order);
        Ok(k)
    }

    pub fn memoryless(alphabet: Alphabet, dist: Distribution<T>) -> Result<Self, KernelError> {
        let mut k = Self::new(alphabet, [(Context::empty(), dist)])?;
        k.family = TreeFamily::Memoryless;
        Ok(k)
    }

    /// Binary variable-length chain given `P(1|s)` per leaf `s`.
    pub fn binary(leaves: &[(&str, f64)]) -> Result<Self, KernelError> {
        let alphabet = Alphabet::binary();
        let mut out = Vec::new();
        for &(ctx, p1) in leaves {
            let ctx = alphabet.parse(ctx).map_err(|_| KernelError::ForeignSymbol(u16::MAX))?;
            let label = alphabet.format(&ctx);
            let dist = Distribution::checked(vec![T::of_f64(1.0 - p1), T::of_f64(p1)], &label)?;
            out.push((ctx, dist));
        }
        Self::new(alphabet, out)
    }

    fn from_trie(alphabet: Alphabet, family: TreeFamily, tree: LabeledTrie<Distribution<T>>) -> Self {
        let floors = tree.fold_nodes(
            |d| d.probs().to_vec(),
            |children| {
                let mut m = children[0].clone();
                for c in &children[1..] {
                    for (x, &y) in m.iter_mut().zip(c) {
                        *x = x.min_of(y);
                    }
                }
                m
            },
        );
        Self {
            alphabet,
            family,
            tree,
            floors,
        }
    }

    pub fn family(&self) -> TreeFamily {
        self.family
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// The dictionary with its leaf distributions.
    pub fn tree(&self) -> &LabeledTrie<Distribution<T>> {
        &self.tree
    }

    /// `d(D)`.
    pub fn depth(&self) -> usize {
        self.tree.depth()
    }

    pub(crate) fn root(&self) -> NodeId {
        self.tree.root()
    }

    pub(crate) fn extend(&self, c: &NodeId, older: Symbol) -> NodeId {
        self.tree.child(*c, older).unwrap_or(*c)
    }

    pub(crate) fn bounds_into(&self, c: &NodeId, out: &mut [T]) -> bool {
        out.copy_from_slice(&self.floors[c.0 as usize]);
        self.tree.is_leaf(*c)
    }

    /// Largest total-variation distance between two leaf laws below `s`; zero once `s`
    /// reaches a leaf.
    pub fn oscillation(&self, s: &Context) -> Result<T, KernelError> {
        for g in s.symbols() {
            if g.index() >= self.alphabet.size() {
                return Err(KernelError::ForeignSymbol(g.0));
            }
        }
        let node = match self.tree.descend(s.recent_first()) {
            Descent::Leaf { .. } => return Ok(T::zero()),
            Descent::Internal { node, .. } => node,
        };
        let laws = self.tree.labels_below(node);
        let mut worst = T::zero();
        for (i, p) in laws.iter().enumerate() {
            for q in &laws[i + 1..] {
                worst = worst.max_of(p.tv(q));
            }
        }
        Ok(worst)
    }
}

impl<T: Scalar> TransitionKernel<T> for ContextTreeKernel<T> {
    type Cursor = NodeId;

    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn root(&self) -> NodeId {
        ContextTreeKernel::root(self)
    }

    fn extend(&self, c: &NodeId, older: Symbol) -> NodeId {
        ContextTreeKernel::extend(self, c, older)
    }

    fn bounds_into(&self, c: &NodeId, out: &mut [T]) -> bool {
        ContextTreeKernel::bounds_into(self, c, out)
    }

    fn order(&self) -> Option<usize> {
        Some(self.tree.depth())
    }

    fn min_mass_closed_form(&self, k: usize) -> Option<T> {
        (k >= self.tree.depth()).then(T::one)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> ContextTreeKernel<f64> {
        ContextTreeKernel::binary(&[("0", 0.3), ("01", 0.6), ("11", 0.9)]).unwrap()
    }

    #[test]
    fn lower_bounds_examples() {
        let k = desk();
        let a = k.alphabet().clone();
        let row = k.lower_bounds(&a.parse("1").unwrap()).unwrap();
        assert!((row.a[0] - 0.1).abs() < 1e-15);
        assert!((row.a[1] - 0.6).abs() < 1e-15);
        assert!((row.mass - 0.7).abs() < 1e-15);
        assert!(!row.resolved);

        let row = k.lower_bounds(&a.parse("101").unwrap()).unwrap();
        assert!(row.resolved);
        assert_eq!(row.a, vec![0.4, 0.6]);
        assert_eq!(row.mass, 1.0);

        let eps = k.lower_bounds(&Context::empty()).unwrap();
        assert!((eps.a[0] - 0.1).abs() < 1e-15 && (eps.a[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn oscillation_examples() {
        let k = desk();
        let a = k.alphabet().clone();
        assert!((k.oscillation(&a.parse("1").unwrap()).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(k.oscillation(&a.parse("0").unwrap()).unwrap(), 0.0);
        assert_eq!(k.oscillation(&a.parse("11").unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn full_markov_requires_every_context() {
        let a = Alphabet::binary();
        let d = || Distribution::<f64>::from_f64(&[0.5, 0.5]).unwrap();
        let ok = ContextTreeKernel::full_markov(
            a.clone(),
            1,
            [(a.parse("0").unwrap(), d()), (a.parse("1").unwrap(), d())],
        );
        assert_eq!(ok.unwrap().family(), TreeFamily::FullMarkov(1));
        let bad = ContextTreeKernel::full_markov(
            a.clone(),
            2,
            [(a.parse("0").unwrap(), d()), (a.parse("1").unwrap(), d())],
        );
        assert!(matches!(bad, Err(KernelError::NotFullOrder { .. })));
    }

    #[test]
    fn foreign_symbols_rejected() {
        let k = desk();
        let ctx = Context::new(vec![Symbol(5)]);
        assert_eq!(k.lower_bounds(&ctx), Err(KernelError::ForeignSymbol(5)));
    }
}
