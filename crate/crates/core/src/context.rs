//! Symbols, alphabets and finite contexts.
//!
//! A [`Context`] stores its symbols oldest-to-newest, the way it is written down.
//! Tries walk it the other way round: the edge nearest the root is the most recent
//! symbol.

use std::fmt;

use thiserror::Error;

/// Index of a symbol in its alphabet. The alphabet order is the symbol order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(pub u16);

impl Symbol {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlphabetError {
    #[error("alphabet must contain at least one symbol")]
    Empty,
    #[error("duplicate symbol {0:?} in alphabet")]
    Duplicate(String),
    #[error("alphabet has {0} symbols, at most 65535 are supported")]
    TooLarge(usize),
    #[error("unknown symbol {symbol:?} in {text:?}")]
    UnknownSymbol { symbol: String, text: String },
}

/// A finite, totally ordered set of named symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    names: Vec<String>,
    single_char: bool,
}

impl Alphabet {
    pub fn new<I, S>(names: I) -> Result<Self, AlphabetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(AlphabetError::Empty);
        }
        if names.len() > u16::MAX as usize {
            return Err(AlphabetError::TooLarge(names.len()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(AlphabetError::Duplicate(n.clone()));
            }
        }
        let single_char = names.iter().all(|n| n.chars().count() == 1);
        Ok(Self { names, single_char })
    }

    /// `{0, 1}`.
    pub fn binary() -> Self {
        Self::new(["0", "1"]).expect("valid alphabet")
    }

    /// `{0, 1, ..., size-1}` with decimal names.
    pub fn numbered(size: usize) -> Self {
        Self::new((0..size).map(|i| i.to_string())).expect("valid alphabet")
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + Clone {
        (0..self.names.len() as u16).map(Symbol)
    }

    pub fn name(&self, s: Symbol) -> &str {
        &self.names[s.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn symbol(&self, name: &str) -> Option<Symbol> {
        self.names.iter().position(|n| n == name).map(|i| Symbol(i as u16))
    }

    /// Whether contexts are written without separators.
    pub fn is_single_char(&self) -> bool {
        self.single_char
    }

    /// Parses an oldest-to-newest context string.
    ///
    /// Single-character alphabets concatenate symbols; others separate them with commas.
    pub fn parse(&self, text: &str) -> Result<Context, AlphabetError> {
        let unknown = |symbol: &str| AlphabetError::UnknownSymbol {
            symbol: symbol.to_string(),
            text: text.to_string(),
        };
        let mut out = Vec::new();
        if text.is_empty() {
            return Ok(Context::empty());
        }
        if self.single_char {
            for c in text.chars() {
                let mut buf = [0u8; 4];
                let name: &str = c.encode_utf8(&mut buf);
                out.push(self.symbol(name).ok_or_else(|| unknown(name))?);
            }
        } else {
            for part in text.split(',') {
                let name = part.trim();
                out.push(self.symbol(name).ok_or_else(|| unknown(name))?);
            }
        }
        Ok(Context::new(out))
    }

    pub fn format(&self, ctx: &Context) -> String {
        self.format_symbols(ctx.symbols())
    }

    pub fn format_symbols(&self, symbols: &[Symbol]) -> String {
        let sep = if self.single_char { "" } else { "," };
        symbols.iter().map(|&s| self.name(s)).collect::<Vec<_>>().join(sep)
    }

    /// Every context of length `k`, in lexicographic order of their oldest-to-newest spelling.
    pub fn all_contexts(&self, k: usize) -> Vec<Context> {
        let n = self.size();
        let total = n.pow(k as u32);
        (0..total)
            .map(|mut code| {
                let mut v = vec![Symbol(0); k];
                for slot in v.iter_mut().rev() {
                    *slot = Symbol((code % n) as u16);
                    code /= n;
                }
                Context::new(v)
            })
            .collect()
    }
}

/// A finite word of past symbols, oldest first. The empty context is `ε`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context {
    symbols: Vec<Symbol>,
}

impl Context {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Self { symbols }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a context from most-recent-first symbols.
    pub fn from_recent_first<I: IntoIterator<Item = Symbol>>(recent_first: I) -> Self {
        let mut symbols: Vec<Symbol> = recent_first.into_iter().collect();
        symbols.reverse();
        Self { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Oldest-to-newest.
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Most recent symbol first: the order a trie consumes them.
    pub fn recent_first(&self) -> impl DoubleEndedIterator<Item = Symbol> + ExactSizeIterator + '_ {
        self.symbols.iter().rev().copied()
    }

    /// The last `k` symbols.
    pub fn suffix(&self, k: usize) -> Context {
        let k = k.min(self.len());
        Context::new(self.symbols[self.len() - k..].to_vec())
    }

    /// `self` followed by `g` as the new most recent symbol.
    pub fn then(&self, g: Symbol) -> Context {
        let mut symbols = Vec::with_capacity(self.len() + 1);
        symbols.extend_from_slice(&self.symbols);
        symbols.push(g);
        Context::new(symbols)
    }

    /// `g` prepended as the new oldest symbol.
    pub fn preceded_by(&self, g: Symbol) -> Context {
        let mut symbols = Vec::with_capacity(self.len() + 1);
        symbols.push(g);
        symbols.extend_from_slice(&self.symbols);
        Context::new(symbols)
    }

    /// `s ⪯ self`: the last `|s|` symbols of `self` spell `s`.
    pub fn has_suffix(&self, s: &Context) -> bool {
        is_suffix(s, self)
    }
}

impl From<Vec<Symbol>> for Context {
    fn from(symbols: Vec<Symbol>) -> Self {
        Self::new(symbols)
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("ε");
        }
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{}", s.0)?;
        }
        Ok(())
    }
}

/// True iff `s` is a suffix of `h`. The empty context is a suffix of everything.
pub fn is_suffix(s: &Context, h: &Context) -> bool {
    h.len() >= s.len() && h.symbols[h.len() - s.len()..] == s.symbols[..]
}
