//! Complete suffix dictionaries and piecewise-constant maps stored as tries.
//!
//! Nodes live in a flat arena. A branch owns `arity` consecutive children, child
//! `g` of the node for context `s` being the node for `g·s` (one symbol further in
//! the past). Children are always stored after their parent, so a reverse scan of
//! the arena is a valid post-order. Every traversal here is iterative: slices of
//! slowly-continuous kernels can be thousands of levels deep.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::context::{Alphabet, Context, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrieError {
    #[error("context {0} is covered twice (overlapping contexts)")]
    Overlapping(Context),
    #[error("histories ending in {0} have no suffix in the dictionary")]
    Incomplete(Context),
    #[error("symbol {0} is outside an alphabet of size {1}")]
    ForeignSymbol(u16, usize),
    #[error("{0} is not a leaf")]
    NotALeaf(Context),
    #[error("arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("arity must be at least 1")]
    ZeroArity,
}

/// Opaque handle on a trie node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) u32);

#[derive(Clone, Debug, PartialEq)]
enum Node<V> {
    Leaf(V),
    Branch(u32),
    /// Only present while a trie is being assembled.
    Vacant,
}

/// Result of [`LabeledTrie::lookup`].
#[derive(Debug, PartialEq)]
pub enum Lookup<'a, V> {
    /// The unique leaf that is a suffix of the queried context.
    Leaf { context: Context, label: &'a V },
    /// The context ends at an internal node: older symbols are needed.
    NeedsDeeper(NodeId),
}

/// Outcome of walking a trie along most-recent-first symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Descent {
    /// Reached leaf `node` after consuming `depth` symbols.
    Leaf { node: NodeId, depth: usize },
    /// Symbols ran out at internal node `node`.
    Internal { node: NodeId, depth: usize },
}

/// A complete suffix dictionary with one label per leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTrie<V> {
    arity: usize,
    nodes: Vec<Node<V>>,
}

/// A complete suffix dictionary without labels.
pub type CsdTrie = LabeledTrie<()>;

impl<V> LabeledTrie<V> {
    /// The dictionary `{ε}` labeled `value`.
    pub fn leaf(arity: usize, value: V) -> Self {
        assert!(arity >= 1, "arity must be positive");
        Self {
            arity,
            nodes: vec![Node::Leaf(value)],
        }
    }

    /// The complete dictionary `G^depth`, each leaf labeled by `label(context)`.
    pub fn complete<F: FnMut(&Context) -> V>(arity: usize, depth: usize, mut label: F) -> Self {
        let mut trie = Self::under_construction(arity);
        let mut stack: Vec<(u32, Vec<Symbol>)> = vec![(0, Vec::new())];
        while let Some((node, recent_first)) = stack.pop() {
            if recent_first.len() == depth {
                let ctx = Context::from_recent_first(recent_first);
                trie.nodes[node as usize] = Node::Leaf(label(&ctx));
            } else {
                let first = trie.expand(node);
                for g in (0..arity).rev() {
                    let mut path = recent_first.clone();
                    path.push(Symbol(g as u16));
                    stack.push((first + g as u32, path));
                }
            }
        }
        trie
    }

    /// Builds a trie from its leaves, checking that they form a complete suffix dictionary.
    pub fn from_leaves<I>(arity: usize, leaves: I) -> Result<Self, TrieError>
    where
        I: IntoIterator<Item = (Context, V)>,
    {
        if arity == 0 {
            return Err(TrieError::ZeroArity);
        }
        let mut trie = Self::under_construction(arity);
        for (ctx, value) in leaves {
            let mut node = 0u32;
            for (i, g) in ctx.recent_first().enumerate() {
                if g.index() >= arity {
                    return Err(TrieError::ForeignSymbol(g.0, arity));
                }
                node = match trie.nodes[node as usize] {
                    Node::Leaf(_) => {
                        return Err(TrieError::Overlapping(ctx.suffix(i)));
                    }
                    Node::Branch(first) => first + g.0 as u32,
                    Node::Vacant => trie.expand(node) + g.0 as u32,
                };
            }
            match trie.nodes[node as usize] {
                Node::Vacant => trie.nodes[node as usize] = Node::Leaf(value),
                _ => return Err(TrieError::Overlapping(ctx)),
            }
        }
        if let Some(node) = trie.first_vacant() {
            return Err(TrieError::Incomplete(trie.context_of(node)));
        }
        Ok(trie)
    }

    pub(crate) fn under_construction(arity: usize) -> Self {
        assert!(arity >= 1, "arity must be positive");
        Self {
            arity,
            nodes: vec![Node::Vacant],
        }
    }

    pub(crate) fn expand(&mut self, node: u32) -> u32 {
        let first = self.nodes.len() as u32;
        self.nodes.extend((0..self.arity).map(|_| Node::Vacant));
        self.nodes[node as usize] = Node::Branch(first);
        first
    }

    pub(crate) fn set_leaf(&mut self, node: u32, value: V) {
        self.nodes[node as usize] = Node::Leaf(value);
    }

    fn first_vacant(&self) -> Option<u32> {
        self.nodes
            .iter()
            .position(|n| matches!(n, Node::Vacant))
            .map(|i| i as u32)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    /// True when the dictionary is `{ε}`.
    pub fn is_constant(&self) -> bool {
        matches!(self.nodes[0], Node::Leaf(_))
    }

    /// Label of the root when the dictionary is `{ε}`.
    pub fn constant_value(&self) -> Option<&V> {
        match &self.nodes[0] {
            Node::Leaf(v) => Some(v),
            _ => None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    /// `d(D)`: length of the longest leaf context.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0u32; self.nodes.len()];
        let mut best = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Branch(first) = *n {
                let d = depth[i] + 1;
                for c in first..first + self.arity as u32 {
                    depth[c as usize] = d;
                }
                best = best.max(d);
            }
        }
        best as usize
    }

    /// Label stored at a leaf node.
    pub fn label(&self, node: NodeId) -> Option<&V> {
        match &self.nodes[node.0 as usize] {
            Node::Leaf(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        matches!(self.nodes[node.0 as usize], Node::Leaf(_))
    }

    /// Child for one more (older) symbol, if `node` is a branch.
    pub fn child(&self, node: NodeId, older: Symbol) -> Option<NodeId> {
        match self.nodes[node.0 as usize] {
            Node::Branch(first) => Some(NodeId(first + older.0 as u32)),
            _ => None,
        }
    }

    /// Walks from the root consuming most-recent-first symbols until a leaf is hit
    /// or the symbols run out.
    pub fn descend<I: IntoIterator<Item = Symbol>>(&self, recent_first: I) -> Descent {
        self.descend_from(self.root(), 0, recent_first)
    }

    /// As [`descend`](Self::descend), starting from `node` at depth `depth`.
    pub fn descend_from<I: IntoIterator<Item = Symbol>>(&self, node: NodeId, depth: usize, recent_first: I) -> Descent {
        let mut node = node.0;
        let mut depth = depth;
        let mut symbols = recent_first.into_iter();
        loop {
            match self.nodes[node as usize] {
                Node::Leaf(_) => {
                    return Descent::Leaf {
                        node: NodeId(node),
                        depth,
                    }
                }
                Node::Branch(first) => match symbols.next() {
                    Some(g) => {
                        debug_assert!(g.index() < self.arity);
                        node = first + g.0 as u32;
                        depth += 1;
                    }
                    None => {
                        return Descent::Internal {
                            node: NodeId(node),
                            depth,
                        }
                    }
                },
                Node::Vacant => unreachable!("vacant node in a finished trie"),
            }
        }
    }

    /// Finds the unique leaf that is a suffix of `h`.
    pub fn lookup(&self, h: &Context) -> Lookup<'_, V> {
        match self.descend(h.recent_first()) {
            Descent::Leaf { node, depth } => Lookup::Leaf {
                context: h.suffix(depth),
                label: self.label(node).expect("leaf"),
            },
            Descent::Internal { node, .. } => Lookup::NeedsDeeper(node),
        }
    }

    /// Label of the leaf suffix of `h`, if `h` is long enough.
    pub fn value_at(&self, h: &Context) -> Option<&V> {
        match self.descend(h.recent_first()) {
            Descent::Leaf { node, .. } => self.label(node),
            Descent::Internal { .. } => None,
        }
    }

    /// Node reached by following `ctx` exactly, even if it is internal.
    pub fn node_at(&self, ctx: &Context) -> Option<NodeId> {
        let mut node = self.root();
        for g in ctx.recent_first() {
            node = self.child(node, g)?;
        }
        Some(node)
    }

    /// Context spelled by the path from the root to `node`.
    pub fn context_of_node(&self, node: NodeId) -> Context {
        self.context_of(node.0)
    }

    fn context_of(&self, target: u32) -> Context {
        // Children follow parents in the arena; rebuild parent links on demand.
        let mut parent: HashMap<u32, (u32, u16)> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Branch(first) = *n {
                for g in 0..self.arity as u32 {
                    parent.insert(first + g, (i as u32, g as u16));
                }
            }
        }
        let mut recent_first = Vec::new();
        let mut cur = target;
        while let Some(&(p, g)) = parent.get(&cur) {
            recent_first.push(Symbol(g));
            cur = p;
        }
        recent_first.reverse();
        Context::from_recent_first(recent_first)
    }

    /// All leaves with their contexts, in depth-first order (symbol order at every level).
    pub fn leaves(&self) -> Vec<(Context, &V)> {
        let mut out = Vec::new();
        self.visit_leaves(|recent_first, v| out.push((Context::from_recent_first(recent_first.iter().copied()), v)));
        out
    }

    /// Leaf contexts only.
    pub fn leaf_contexts(&self) -> Vec<Context> {
        self.leaves().into_iter().map(|(c, _)| c).collect()
    }

    /// Calls `f(path, label)` for every leaf, `path` being most-recent-first.
    pub fn visit_leaves<'a, F: FnMut(&[Symbol], &'a V)>(&'a self, mut f: F) {
        // (node, depth) with an explicit path buffer truncated to depth on each pop.
        let mut path: Vec<Symbol> = Vec::new();
        let mut stack: Vec<(u32, usize, Option<Symbol>)> = vec![(0, 0, None)];
        while let Some((node, depth, edge)) = stack.pop() {
            path.truncate(depth.saturating_sub(1));
            if let Some(g) = edge {
                path.push(g);
            }
            match &self.nodes[node as usize] {
                Node::Leaf(v) => f(&path, v),
                Node::Branch(first) => {
                    for g in (0..self.arity).rev() {
                        stack.push((first + g as u32, depth + 1, Some(Symbol(g as u16))));
                    }
                }
                Node::Vacant => unreachable!("vacant node in a finished trie"),
            }
        }
    }

    /// Every label stored below `node` (including `node` itself if it is a leaf).
    pub fn labels_below(&self, node: NodeId) -> Vec<&V> {
        let mut out = Vec::new();
        let mut stack = vec![node.0];
        while let Some(n) = stack.pop() {
            match &self.nodes[n as usize] {
                Node::Leaf(v) => out.push(v),
                Node::Branch(first) => stack.extend(*first..*first + self.arity as u32),
                Node::Vacant => unreachable!("vacant node in a finished trie"),
            }
        }
        out
    }

    /// Bottom-up summary of every node, indexed by `NodeId`: leaves through `leaf`,
    /// branches through `merge` applied to their children's summaries in symbol order.
    pub fn fold_nodes<A, L, M>(&self, mut leaf: L, mut merge: M) -> Vec<A>
    where
        A: Clone,
        L: FnMut(&V) -> A,
        M: FnMut(&[A]) -> A,
    {
        let mut out: Vec<Option<A>> = vec![None; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            out[i] = Some(match &self.nodes[i] {
                Node::Leaf(v) => leaf(v),
                Node::Branch(first) => {
                    let first = *first as usize;
                    let children: Vec<A> = out[first..first + self.arity]
                        .iter()
                        .map(|c| c.clone().expect("children precede parents in reverse order"))
                        .collect();
                    merge(&children)
                }
                Node::Vacant => unreachable!("vacant node in a finished trie"),
            });
        }
        out.into_iter().map(|a| a.expect("every node summarized")).collect()
    }

    /// Applies `f` to every label, keeping the shape.
    pub fn map<W, F: FnMut(&V) -> W>(&self, mut f: F) -> LabeledTrie<W> {
        LabeledTrie {
            arity: self.arity,
            nodes: self
                .nodes
                .iter()
                .map(|n| match n {
                    Node::Leaf(v) => Node::Leaf(f(v)),
                    Node::Branch(first) => Node::Branch(*first),
                    Node::Vacant => Node::Vacant,
                })
                .collect(),
        }
    }

    /// The unlabeled dictionary.
    pub fn shape(&self) -> CsdTrie {
        self.map(|_| ())
    }

    /// Structural check: every branch has `arity` children, nothing is left vacant,
    /// and each node is reachable exactly once from the root.
    pub fn check_structure(&self) -> Result<(), TrieError> {
        if let Some(n) = self.first_vacant() {
            return Err(TrieError::Incomplete(self.context_of(n)));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n as usize], true) {
                return Err(TrieError::Overlapping(self.context_of(n)));
            }
            if let Node::Branch(first) = self.nodes[n as usize] {
                if first as usize + self.arity > self.nodes.len() || first <= n {
                    return Err(TrieError::Incomplete(self.context_of(n)));
                }
                stack.extend(first..first + self.arity as u32);
            }
        }
        Ok(())
    }
}

impl<V: Clone> LabeledTrie<V> {
    /// Replaces the leaf `at` by a copy of `sub`; the new leaves are the contexts `h·at`
    /// for the leaves `h` of `sub`.
    pub fn graft(&mut self, at: &Context, sub: &LabeledTrie<V>) -> Result<(), TrieError> {
        if sub.arity != self.arity {
            return Err(TrieError::ArityMismatch(self.arity, sub.arity));
        }
        let node = match self.descend(at.recent_first()) {
            Descent::Leaf { node, depth } if depth == at.len() => node,
            _ => return Err(TrieError::NotALeaf(at.clone())),
        };
        self.graft_subtree(node, sub, sub.root());
        Ok(())
    }

    /// Overwrites node `at` (a leaf) with a copy of the subtree of `src` rooted at `src_node`.
    pub(crate) fn graft_subtree(&mut self, at: NodeId, src: &LabeledTrie<V>, src_node: NodeId) {
        let mut stack = vec![(at.0, src_node.0)];
        while let Some((dst, s)) = stack.pop() {
            match &src.nodes[s as usize] {
                Node::Leaf(v) => self.nodes[dst as usize] = Node::Leaf(v.clone()),
                Node::Branch(first) => {
                    let new_first = self.expand(dst);
                    for g in 0..self.arity as u32 {
                        stack.push((new_first + g, first + g));
                    }
                }
                Node::Vacant => unreachable!("vacant node in a finished trie"),
            }
        }
    }
}

/// How a leaf of the outer trie in [`LabeledTrie::compose`] extends its context.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Follow {
    /// Append this symbol as the new most recent one.
    Symbol(Symbol),
    /// The appended symbol is unknown: any of them.
    Any,
}

impl<V: Clone> LabeledTrie<V> {
    /// `E(s) = prev(s·g)` for every leaf `s` of `outer` with `follow(s) = g`: where `prev`
    /// needs more than `s·g`, the matching subtree of `prev` is grafted under `s`. For
    /// [`Follow::Any`] every symbol is tried and the reachable labels merged by `union`.
    ///
    /// `outer` and `prev` are walked together, one position in `prev` per candidate
    /// symbol, so the cost is linear in the size of the output.
    pub(crate) fn compose<S, F, U>(outer: &LabeledTrie<S>, prev: &LabeledTrie<V>, follow: F, union: U) -> Self
    where
        F: Fn(&S) -> Follow,
        U: Fn(&[&V]) -> V,
    {
        let arity = prev.arity;
        assert_eq!(outer.arity, arity, "arity mismatch");
        let step = |pos: u32, g: usize| match prev.nodes[pos as usize] {
            Node::Branch(first) => first + g as u32,
            _ => pos,
        };
        let mut out = Self::under_construction(arity);
        let start: Vec<u32> = (0..arity).map(|g| step(0, g)).collect();
        let mut stack = vec![(0u32, 0u32, start)];
        while let Some((dst, src, pos)) = stack.pop() {
            match &outer.nodes[src as usize] {
                Node::Leaf(label) => match follow(label) {
                    Follow::Symbol(g) => {
                        let p = pos[g.index()];
                        match &prev.nodes[p as usize] {
                            Node::Leaf(v) => out.nodes[dst as usize] = Node::Leaf(v.clone()),
                            _ => out.graft_subtree(NodeId(dst), prev, NodeId(p)),
                        }
                    }
                    Follow::Any => {
                        let labels: Vec<&V> = pos.iter().flat_map(|&p| prev.labels_below(NodeId(p))).collect();
                        out.nodes[dst as usize] = Node::Leaf(union(&labels));
                    }
                },
                Node::Branch(first) => {
                    let new_first = out.expand(dst);
                    for h in 0..arity {
                        let child_pos = pos.iter().map(|&p| step(p, h)).collect();
                        stack.push((new_first + h as u32, first + h as u32, child_pos));
                    }
                }
                Node::Vacant => unreachable!("vacant node in a finished trie"),
            }
        }
        out
    }
}

impl<V: Clone + PartialEq> LabeledTrie<V> {
    /// The minimal trie of the same piecewise-constant map: repeatedly collapses every
    /// branch whose children are leaves carrying one common label.
    pub fn prune_minimal(&self) -> LabeledTrie<V> {
        // Reverse arena order visits children before parents.
        let mut collapsed: Vec<Option<usize>> = vec![None; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            match &self.nodes[i] {
                Node::Leaf(_) => collapsed[i] = Some(i),
                Node::Branch(first) => {
                    let first = *first as usize;
                    let Some(rep) = collapsed[first] else { continue };
                    let label = self.leaf_label(rep);
                    let uniform = (first + 1..first + self.arity)
                        .all(|c| collapsed[c].is_some_and(|r| self.leaf_label(r) == label));
                    if uniform {
                        collapsed[i] = Some(rep);
                    }
                }
                Node::Vacant => unreachable!("vacant node in a finished trie"),
            }
        }
        let mut out = Self::under_construction(self.arity);
        let mut stack = vec![(0u32, 0u32)];
        while let Some((dst, src)) = stack.pop() {
            if let Some(rep) = collapsed[src as usize] {
                out.nodes[dst as usize] = Node::Leaf(self.leaf_label(rep).clone());
                continue;
            }
            let Node::Branch(first) = self.nodes[src as usize] else {
                unreachable!("uncollapsed leaf")
            };
            let new_first = out.expand(dst);
            for g in 0..self.arity as u32 {
                stack.push((new_first + g, first + g));
            }
        }
        out
    }

    fn leaf_label(&self, i: usize) -> &V {
        match &self.nodes[i] {
            Node::Leaf(v) => v,
            _ => unreachable!("not a leaf"),
        }
    }

    /// True when no branch has all-leaf children with one common label.
    pub fn is_minimal(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            Node::Branch(first) => {
                let first = *first as usize;
                let labels: Option<Vec<&V>> = (first..first + self.arity)
                    .map(|c| match &self.nodes[c] {
                        Node::Leaf(v) => Some(v),
                        _ => None,
                    })
                    .collect();
                match labels {
                    Some(ls) => ls.iter().any(|l| *l != ls[0]),
                    None => true,
                }
            }
            _ => true,
        })
    }
}

impl<V> LabeledTrie<V> {
    /// Indented text dump, one line per node.
    pub fn to_text<F: Fn(&V) -> String>(&self, alphabet: &Alphabet, label: F) -> String {
        let mut out = String::new();
        let mut stack: Vec<(u32, Vec<Symbol>)> = vec![(0, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            let ctx = Context::from_recent_first(path.iter().copied());
            let name = if ctx.is_empty() {
                "ε".to_string()
            } else {
                alphabet.format(&ctx)
            };
            let indent = "  ".repeat(path.len());
            match &self.nodes[node as usize] {
                Node::Leaf(v) => {
                    let _ = writeln!(out, "{indent}{name} -> {}", label(v));
                }
                Node::Branch(first) => {
                    let _ = writeln!(out, "{indent}{name}");
                    for g in (0..self.arity).rev() {
                        let mut p = path.clone();
                        p.push(Symbol(g as u16));
                        stack.push((first + g as u32, p));
                    }
                }
                Node::Vacant => {
                    let _ = writeln!(out, "{indent}{name} <vacant>");
                }
            }
        }
        out
    }

    /// Graphviz DOT text: one node per context, leaf labels shown, edges labeled by symbol.
    pub fn to_dot<F: Fn(&V) -> String>(&self, alphabet: &Alphabet, label: F) -> String {
        let mut out = String::from("digraph trie {\n  node [shape=circle];\n");
        let mut stack: Vec<(u32, Vec<Symbol>)> = vec![(0, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            let ctx = Context::from_recent_first(path.iter().copied());
            let name = if ctx.is_empty() {
                "ε".to_string()
            } else {
                alphabet.format(&ctx)
            };
            match &self.nodes[node as usize] {
                Node::Leaf(v) => {
                    let _ = writeln!(
                        out,
                        "  n{node} [shape=box, label=\"{}\\n{}\"];",
                        escape(&name),
                        escape(&label(v))
                    );
                }
                _ => {
                    let _ = writeln!(out, "  n{node} [label=\"{}\"];", escape(&name));
                }
            }
            if let Node::Branch(first) = self.nodes[node as usize] {
                for g in 0..self.arity {
                    let child = first + g as u32;
                    let _ = writeln!(
                        out,
                        "  n{node} -> n{child} [label=\"{}\"];",
                        escape(alphabet.name(Symbol(g as u16)))
                    );
                }
                for g in (0..self.arity).rev() {
                    let mut p = path.clone();
                    p.push(Symbol(g as u16));
                    stack.push((first + g as u32, p));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// `Dp ⪰ D`: every leaf of `dp` has a suffix among the leaves of `d`.
pub fn dominates<V, W>(dp: &LabeledTrie<V>, d: &LabeledTrie<W>) -> bool {
    let mut ok = true;
    dp.visit_leaves(|path, _| {
        if ok && !matches!(d.descend(path.iter().copied()), Descent::Leaf { .. }) {
            ok = false;
        }
    });
    ok
}

/// The prefix closure `D̄`: maximal elements, for the suffix order, of the set of all
/// nonempty oldest-side prefixes of the words of `d`.
pub fn prefix_closure<V>(d: &LabeledTrie<V>) -> Result<CsdTrie, TrieError> {
    let words = d.leaf_contexts();
    let mut prefixes: HashSet<Vec<Symbol>> = HashSet::new();
    for w in &words {
        for end in 1..=w.len() {
            prefixes.insert(w.symbols()[..end].to_vec());
        }
    }
    if prefixes.is_empty() {
        return Ok(CsdTrie::leaf(d.arity(), ()));
    }
    let mut dominated: HashSet<&[Symbol]> = HashSet::new();
    for p in &prefixes {
        for start in 1..p.len() {
            dominated.insert(&p[start..]);
        }
    }
    let mut maximal: Vec<Context> = prefixes
        .iter()
        .filter(|p| !dominated.contains(p.as_slice()))
        .map(|p| Context::new(p.clone()))
        .collect();
    maximal.sort();
    CsdTrie::from_leaves(d.arity(), maximal.into_iter().map(|c| (c, ())))
}

/// Independent check that a finite list of contexts is a complete suffix dictionary:
/// no word is a suffix of another, and the Kraft sum `Σ |G|^{-|s|}` equals one.
pub fn is_csd(arity: usize, contexts: &[Context]) -> bool {
    for (i, a) in contexts.iter().enumerate() {
        for (j, b) in contexts.iter().enumerate() {
            if i != j && crate::context::is_suffix(a, b) {
                return false;
            }
        }
    }
    let depth = contexts.iter().map(Context::len).max().unwrap_or(0);
    if arity == 1 {
        return contexts.len() == 1;
    }
    let bits = (arity as f64).log2() * depth as f64;
    if bits < 120.0 {
        let total = (arity as u128).pow(depth as u32);
        let sum: u128 = contexts
            .iter()
            .map(|c| (arity as u128).pow((depth - c.len()) as u32))
            .sum();
        sum == total
    } else {
        // Too deep for exact integer arithmetic: fall back to building the trie.
        CsdTrie::from_leaves(arity, contexts.iter().cloned().map(|c| (c, ()))).is_ok()
    }
}
