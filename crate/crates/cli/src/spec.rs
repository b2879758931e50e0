//! Kernel-spec files: JSON in, validated kernel out.
//!
//! ```json
//! {"type": "context_tree", "alphabet": ["0", "1"],
//!  "contexts": [{"context": "0", "probs": {"0": 0.7, "1": 0.3}}, ...]}
//! ```
//!
//! Contexts are written oldest to newest: symbol names concatenated when every name is
//! one character long, comma-separated otherwise.

use std::collections::BTreeMap;

use ciaftp_core::{
    Alphabet, AlphabetError, Context, ContextTreeKernel, Distribution, Kernel64, KernelError, RenewalSqrtKernel,
    TrieError,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("invalid kernel spec JSON: {0}")]
    Json(String),
    #[error("unknown kernel type {0:?}")]
    UnknownType(String),
    #[error("bad alphabet: {0}")]
    Alphabet(String),
    #[error("unknown symbol {symbol:?} in {place}")]
    UnknownSymbol { symbol: String, place: String },
    #[error("histories ending in {0:?} are not covered by any context")]
    IncompleteDictionary(String),
    #[error("context {0:?} overlaps another context")]
    OverlappingContexts(String),
    #[error("probabilities at context {context:?} sum to {sum}")]
    BadProbability { context: String, sum: f64 },
    #[error("probability {value} at context {context:?} is negative or not finite")]
    NegativeProbability { context: String, value: f64 },
    #[error("{0}")]
    Invalid(String),
}

impl SpecError {
    pub fn code(&self) -> &'static str {
        match self {
            SpecError::Json(_) => "invalid_json",
            SpecError::UnknownType(_) => "unknown_type",
            SpecError::Alphabet(_) => "bad_alphabet",
            SpecError::UnknownSymbol { .. } => "unknown_symbol",
            SpecError::IncompleteDictionary(_) => "incomplete_dictionary",
            SpecError::OverlappingContexts(_) => "overlapping_contexts",
            SpecError::BadProbability { .. } => "bad_probability",
            SpecError::NegativeProbability { .. } => "negative_probability",
            SpecError::Invalid(_) => "invalid_spec",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(rename = "type")]
    kind: String,
    alphabet: Vec<String>,
    #[serde(default)]
    contexts: Vec<RawContext>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContext {
    context: String,
    probs: BTreeMap<String, f64>,
}

/// A parsed kernel with what the commands report about it.
#[derive(Clone, Debug)]
pub struct LoadedKernel {
    pub kernel: Kernel64,
    pub alphabet: Alphabet,
    /// Hex SHA-256 of the spec text.
    pub sha256: String,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn parse_kernel_spec(text: &str) -> Result<LoadedKernel, SpecError> {
    let raw: RawSpec = serde_json::from_str(text).map_err(|e| SpecError::Json(e.to_string()))?;
    let alphabet = Alphabet::new(raw.alphabet.iter().cloned()).map_err(|e| SpecError::Alphabet(e.to_string()))?;
    let kernel: Kernel64 = match raw.kind.as_str() {
        "renewal_sqrt" => {
            if raw.alphabet != ["0", "1"] {
                return Err(SpecError::Alphabet(
                    "renewal_sqrt needs the alphabet [\"0\", \"1\"]".into(),
                ));
            }
            if !raw.contexts.is_empty() {
                return Err(SpecError::Invalid("renewal_sqrt takes no contexts".into()));
            }
            RenewalSqrtKernel::new().into()
        }
        "context_tree" | "full_markov" | "memoryless" => {
            let leaves = leaves(&alphabet, &raw.contexts)?;
            let built = match raw.kind.as_str() {
                "context_tree" => ContextTreeKernel::new(alphabet.clone(), leaves),
                "memoryless" => match leaves.as_slice() {
                    [(c, d)] if c.is_empty() => ContextTreeKernel::memoryless(alphabet.clone(), d.clone()),
                    _ => return Err(SpecError::Invalid("memoryless takes exactly one context, \"\"".into())),
                },
                _ => {
                    let order = leaves.first().map_or(0, |(c, _)| c.len());
                    ContextTreeKernel::full_markov(alphabet.clone(), order, leaves)
                }
            };
            built.map_err(|e| kernel_error(&alphabet, e))?.into()
        }
        other => return Err(SpecError::UnknownType(other.to_string())),
    };
    Ok(LoadedKernel {
        kernel,
        alphabet,
        sha256: sha256_hex(text),
    })
}

fn leaves(alphabet: &Alphabet, contexts: &[RawContext]) -> Result<Vec<(Context, Distribution<f64>)>, SpecError> {
    contexts
        .iter()
        .map(|rc| {
            let ctx = alphabet.parse(&rc.context).map_err(|e| match e {
                AlphabetError::UnknownSymbol { symbol, .. } => SpecError::UnknownSymbol {
                    symbol,
                    place: format!("context {:?}", rc.context),
                },
                other => SpecError::Alphabet(other.to_string()),
            })?;
            let mut probs = vec![0.0; alphabet.size()];
            for (name, &p) in &rc.probs {
                let g = alphabet.symbol(name).ok_or_else(|| SpecError::UnknownSymbol {
                    symbol: name.clone(),
                    place: format!("probs of context {:?}", rc.context),
                })?;
                probs[g.index()] = p;
            }
            let dist = Distribution::checked(probs, &rc.context).map_err(|e| kernel_error(alphabet, e))?;
            Ok((ctx, dist))
        })
        .collect()
}

fn kernel_error(alphabet: &Alphabet, e: KernelError) -> SpecError {
    match e {
        KernelError::BadProbability { context, sum } => SpecError::BadProbability { context, sum },
        KernelError::NegativeProbability { context, value } => SpecError::NegativeProbability { context, value },
        KernelError::Dictionary(TrieError::Incomplete(c)) => SpecError::IncompleteDictionary(alphabet.format(&c)),
        KernelError::Dictionary(TrieError::Overlapping(c)) => SpecError::OverlappingContexts(alphabet.format(&c)),
        other => SpecError::Invalid(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ciaftp_core::TransitionKernel;

    const DESK: &str = r#"{"type": "context_tree", "alphabet": ["0", "1"], "contexts": [
        {"context": "0", "probs": {"0": 0.7, "1": 0.3}},
        {"context": "01", "probs": {"0": 0.4, "1": 0.6}},
        {"context": "11", "probs": {"0": 0.1, "1": 0.9}}]}"#;

    #[test]
    fn memoryless_example() {
        let k = parse_kernel_spec(
            r#"{"type":"memoryless", "alphabet":["0","1"], "contexts":[{"context":"","probs":{"0":0.25,"1":0.75}}]}"#,
        )
        .unwrap();
        assert_eq!(k.kernel.family_name(), "memoryless");
        assert_eq!(k.kernel.transition(&Context::empty()).unwrap(), Some(vec![0.25, 0.75]));
    }

    #[test]
    fn desk_example() {
        let k = parse_kernel_spec(DESK).unwrap();
        assert_eq!(k.kernel.family_name(), "context_tree");
        assert_eq!(k.kernel.as_tree().unwrap().tree().leaf_count(), 3);
        assert_eq!(k.sha256.len(), 64);
    }

    #[test]
    fn incomplete_and_overlapping_dictionaries() {
        let incomplete = r#"{"type": "context_tree", "alphabet": ["0", "1"], "contexts": [
            {"context": "0", "probs": {"0": 0.7, "1": 0.3}},
            {"context": "01", "probs": {"0": 0.4, "1": 0.6}}]}"#;
        assert_eq!(
            parse_kernel_spec(incomplete).unwrap_err(),
            SpecError::IncompleteDictionary("11".into())
        );
        let overlapping = r#"{"type": "context_tree", "alphabet": ["0", "1"], "contexts": [
            {"context": "0", "probs": {"0": 0.7, "1": 0.3}},
            {"context": "1", "probs": {"0": 0.7, "1": 0.3}},
            {"context": "01", "probs": {"0": 0.4, "1": 0.6}}]}"#;
        assert_eq!(
            parse_kernel_spec(overlapping).unwrap_err().code(),
            "overlapping_contexts"
        );
    }

    #[test]
    fn probability_and_symbol_errors() {
        let bad = DESK.replace("0.9}", "0.8}");
        match parse_kernel_spec(&bad).unwrap_err() {
            SpecError::BadProbability { context, sum } => {
                assert_eq!(context, "11");
                assert!((sum - 0.9).abs() < 1e-12);
            }
            e => panic!("{e:?}"),
        }
        let foreign = DESK.replace(r#""context": "11""#, r#""context": "12""#);
        assert_eq!(parse_kernel_spec(&foreign).unwrap_err().code(), "unknown_symbol");
        let foreign = DESK.replace(r#""1": 0.9"#, r#""2": 0.9"#);
        assert_eq!(parse_kernel_spec(&foreign).unwrap_err().code(), "unknown_symbol");
        assert_eq!(parse_kernel_spec("{").unwrap_err().code(), "invalid_json");
        let unknown = DESK.replace("context_tree", "mystery");
        assert_eq!(parse_kernel_spec(&unknown).unwrap_err().code(), "unknown_type");
    }

    #[test]
    fn renewal_and_full_markov() {
        let r = parse_kernel_spec(r#"{"type": "renewal_sqrt", "alphabet": ["0", "1"]}"#).unwrap();
        assert_eq!(r.kernel.family_name(), "renewal_sqrt");
        let fm = r#"{"type": "full_markov", "alphabet": ["a", "b"], "contexts": [
            {"context": "a", "probs": {"a": 0.7, "b": 0.3}},
            {"context": "b", "probs": {"a": 0.6, "b": 0.4}}]}"#;
        assert_eq!(parse_kernel_spec(fm).unwrap().kernel.family_name(), "full_markov");
        let not_full = DESK.replace("context_tree", "full_markov");
        assert_eq!(parse_kernel_spec(&not_full).unwrap_err().code(), "invalid_spec");
    }
}
