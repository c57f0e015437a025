//! Injective codebooks between lag symbols and model-side codewords.
//!
//! A codebook is either token-valued (each symbol maps to a fixed token
//! sequence) or vector-valued (each symbol maps to a d-dimensional point).
//! Both directions matter: `encode` feeds a model, `decode` reads its output
//! back. The round-trip law `decode(encode(s)) == s` is what verification
//! leans on, so [`check_codebook`] treats any violation as data to report.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symbol::{Alphabet, SymbolId};

/// Opaque model-side token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub String);

impl Token {
    pub fn new(text: impl Into<String>) -> Self {
        Token(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CodebookError {
    #[error("token set has a duplicate token {0:?}")]
    DuplicateToken(String),
    #[error("need |tokens|^2 >= alphabet size: {tokens}^2 < {symbols}")]
    InsufficientTokens { tokens: usize, symbols: usize },
    #[error("symbol {0} has no codeword")]
    MissingSymbol(SymbolId),
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("vector codewords must share one dimension, found {0} and {1}")]
    MixedDimensions(usize, usize),
}

/// Ordered set of distinct tokens with a designated halt token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAlphabet {
    tokens: Vec<Token>,
    halt_token: Token,
}

impl TokenAlphabet {
    pub fn new(tokens: Vec<Token>, halt_token: Token) -> Result<Self, CodebookError> {
        let mut seen = HashMap::new();
        for t in &tokens {
            if seen.insert(t.clone(), ()).is_some() {
                return Err(CodebookError::DuplicateToken(t.0.clone()));
            }
        }
        Ok(TokenAlphabet { tokens, halt_token })
    }

    /// Convenience constructor from string labels; the first label doubles as
    /// the halt token unless one is given.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self, CodebookError> {
        let tokens: Vec<Token> = labels.iter().map(|l| Token::new(l.as_ref())).collect();
        let halt = tokens.first().cloned().unwrap_or_else(|| Token::new("halt"));
        TokenAlphabet::new(tokens, halt)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn halt_token(&self) -> &Token {
        &self.halt_token
    }
}

/// Token-valued codebook: symbol -> token sequence, with an exact inverse table.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenCodebook {
    entries: BTreeMap<SymbolId, Vec<Token>>,
    inverse: HashMap<Vec<Token>, SymbolId>,
    halt: SymbolId,
}

impl TokenCodebook {
    pub fn new(entries: BTreeMap<SymbolId, Vec<Token>>, halt: SymbolId) -> Self {
        let inverse = entries.iter().map(|(s, cw)| (cw.clone(), *s)).collect();
        TokenCodebook { entries, inverse, halt }
    }

    pub fn encode(&self, symbol: SymbolId) -> Option<&[Token]> {
        self.entries.get(&symbol).map(|v| v.as_slice())
    }

    pub fn decode_exact(&self, codeword: &[Token]) -> Option<SymbolId> {
        self.inverse.get(codeword).copied()
    }

    pub fn entries(&self) -> &BTreeMap<SymbolId, Vec<Token>> {
        &self.entries
    }

    pub fn halt(&self) -> SymbolId {
        self.halt
    }

    /// Incremental parser over a token stream. With a prefix-free table every
    /// stream of concatenated codewords parses unambiguously.
    pub fn parser(&self) -> CodewordParser<'_> {
        let prefixes = self
            .entries
            .values()
            .flat_map(|cw| (1..cw.len()).map(move |k| cw[..k].to_vec()))
            .collect();
        CodewordParser { book: self, buffer: Vec::new(), prefixes }
    }
}

/// Streaming codeword parser; feed tokens, collect decoded symbols.
pub struct CodewordParser<'a> {
    book: &'a TokenCodebook,
    buffer: Vec<Token>,
    prefixes: std::collections::HashSet<Vec<Token>>,
}

impl<'a> CodewordParser<'a> {
    /// Pushes one token. Returns `Ok(Some(symbol))` when a codeword completes,
    /// `Ok(None)` while a valid prefix is pending, `Err(tokens)` on garbage.
    pub fn push(&mut self, token: Token) -> Result<Option<SymbolId>, Vec<Token>> {
        self.buffer.push(token);
        if let Some(sym) = self.book.decode_exact(&self.buffer) {
            self.buffer.clear();
            return Ok(Some(sym));
        }
        if self.prefixes.contains(&self.buffer) {
            return Ok(None);
        }
        Err(std::mem::take(&mut self.buffer))
    }

    pub fn pending(&self) -> &[Token] {
        &self.buffer
    }
}

/// How a vector codebook maps model outputs back to symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorDecodeRule {
    /// Nearest codeword by L2 distance, ties broken by lowest symbol id.
    NearestCodeword,
    /// An external decoder network owns decoding; holders pair the codebook
    /// with that network at call sites.
    ExternalDecoder,
}

/// Vector-valued codebook: symbol -> point in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorCodebook {
    entries: BTreeMap<SymbolId, Vec<f64>>,
    dim: usize,
    halt: SymbolId,
    pub decode_rule: VectorDecodeRule,
}

impl VectorCodebook {
    pub fn new(entries: BTreeMap<SymbolId, Vec<f64>>, halt: SymbolId) -> Result<Self, CodebookError> {
        let mut dim = None;
        for v in entries.values() {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(CodebookError::MixedDimensions(d, v.len()))
                }
                _ => {}
            }
        }
        let dim = dim.ok_or(CodebookError::EmptyCodebook)?;
        Ok(VectorCodebook { entries, dim, halt, decode_rule: VectorDecodeRule::NearestCodeword })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halt(&self) -> SymbolId {
        self.halt
    }

    pub fn entries(&self) -> &BTreeMap<SymbolId, Vec<f64>> {
        &self.entries
    }

    pub fn encode(&self, symbol: SymbolId) -> Option<&[f64]> {
        self.entries.get(&symbol).map(|v| v.as_slice())
    }

    /// Nearest codeword by squared L2 distance; ties break to the lowest id.
    pub fn nearest(&self, v: &[f64]) -> Option<(SymbolId, &[f64])> {
        let mut best: Option<(SymbolId, &[f64], f64)> = None;
        for (sym, cw) in &self.entries {
            let d: f64 = cw.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            match &best {
                Some((_, _, bd)) if d >= *bd => {}
                _ => best = Some((*sym, cw, d)),
            }
        }
        best.map(|(s, cw, _)| (s, cw))
    }
}

/// Injective encoder/decoder between lag symbols and model codewords.
#[derive(Debug, Clone, PartialEq)]
pub enum Codebook {
    Token(TokenCodebook),
    Vector(VectorCodebook),
}

impl Codebook {
    pub fn halt(&self) -> SymbolId {
        match self {
            Codebook::Token(b) => b.halt(),
            Codebook::Vector(b) => b.halt(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Codebook::Token(_) => "token_code",
            Codebook::Vector(_) => "vector_code",
        }
    }

    pub fn as_token(&self) -> Option<&TokenCodebook> {
        match self {
            Codebook::Token(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&VectorCodebook> {
        match self {
            Codebook::Vector(b) => Some(b),
            _ => None,
        }
    }
}

/// Builds the deterministic pair codebook: symbol `i` (by id order) maps to
/// the `i`-th ordered token pair in lexicographic (index, index) order. Every
/// codeword has width exactly two, so the table is prefix-free.
pub fn build_pair_codebook(
    alphabet: &Alphabet,
    tokens: &TokenAlphabet,
) -> Result<Codebook, CodebookError> {
    let n = alphabet.len();
    let t = tokens.len();
    if t.saturating_mul(t) < n {
        return Err(CodebookError::InsufficientTokens { tokens: t, symbols: n });
    }
    let mut entries = BTreeMap::new();
    for (i, sym) in alphabet.symbols().enumerate() {
        let first = tokens.tokens()[i / t].clone();
        let second = tokens.tokens()[i % t].clone();
        entries.insert(sym.id, vec![first, second]);
    }
    Ok(Codebook::Token(TokenCodebook::new(entries, alphabet.halt())))
}

/// One violation found by [`check_codebook`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CodebookViolation {
    /// Two symbols share one codeword.
    NotInjective { symbols: Vec<SymbolId> },
    /// decode(encode(symbol)) came back as something else (or nothing).
    RoundTrip { symbol: SymbolId, decoded: Option<SymbolId> },
    /// One token codeword is a proper prefix of another.
    PrefixConflict { prefix_of: SymbolId, extends: SymbolId },
    /// An alphabet symbol has no codeword at all.
    Missing { symbol: SymbolId },
}

/// Violation list; empty means the codebook is usable for verification.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport<V> {
    pub violations: Vec<V>,
}

impl<V> ValidationReport<V> {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks injectivity, the round-trip law, and (token codebooks) prefix
/// freeness against `alphabet`. Violations are data, not errors.
pub fn check_codebook(codebook: &Codebook, alphabet: &Alphabet) -> ValidationReport<CodebookViolation> {
    let mut violations = Vec::new();
    match codebook {
        Codebook::Token(book) => {
            for id in alphabet.ids() {
                if book.encode(id).is_none() {
                    violations.push(CodebookViolation::Missing { symbol: id });
                }
            }
            let mut by_word: BTreeMap<&[Token], Vec<SymbolId>> = BTreeMap::new();
            for (sym, cw) in book.entries() {
                by_word.entry(cw.as_slice()).or_default().push(*sym);
            }
            for (_, syms) in by_word.iter().filter(|(_, s)| s.len() > 1) {
                violations.push(CodebookViolation::NotInjective { symbols: syms.clone() });
            }
            let entries: Vec<(&SymbolId, &Vec<Token>)> = book.entries().iter().collect();
            for (sa, ca) in &entries {
                for (sb, cb) in &entries {
                    if sa != sb && ca.len() < cb.len() && cb[..ca.len()] == ca[..] {
                        violations.push(CodebookViolation::PrefixConflict {
                            prefix_of: **sa,
                            extends: **sb,
                        });
                    }
                }
            }
            for (sym, cw) in book.entries() {
                let decoded = book.decode_exact(cw);
                if decoded != Some(*sym) {
                    violations.push(CodebookViolation::RoundTrip { symbol: *sym, decoded });
                }
            }
        }
        Codebook::Vector(book) => {
            for id in alphabet.ids() {
                if book.encode(id).is_none() {
                    violations.push(CodebookViolation::Missing { symbol: id });
                }
            }
            let mut by_bits: HashMap<Vec<u64>, Vec<SymbolId>> = HashMap::new();
            for (sym, cw) in book.entries() {
                let bits: Vec<u64> = cw.iter().map(|x| x.to_bits()).collect();
                by_bits.entry(bits).or_default().push(*sym);
            }
            let mut collisions: Vec<Vec<SymbolId>> =
                by_bits.into_values().filter(|v| v.len() > 1).collect();
            collisions.sort();
            for syms in collisions {
                violations.push(CodebookViolation::NotInjective { symbols: syms });
            }
            for (sym, cw) in book.entries() {
                let decoded = book.nearest(cw).map(|(s, _)| s);
                if decoded != Some(*sym) {
                    violations.push(CodebookViolation::RoundTrip { symbol: *sym, decoded });
                }
            }
        }
    }
    ValidationReport { violations }
}

#[derive(Serialize, Deserialize)]
struct CodebookEntryJson {
    symbol: u32,
    codeword: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct CodebookJson {
    kind: String,
    entries: Vec<CodebookEntryJson>,
    halt: u32,
}

/// Serializes a codebook to the interchange JSON object
/// `{kind, entries: [{symbol, codeword}], halt}`.
pub fn codebook_to_json(codebook: &Codebook) -> serde_json::Value {
    let (kind, entries, halt) = match codebook {
        Codebook::Token(b) => (
            "token_code",
            b.entries()
                .iter()
                .map(|(s, cw)| CodebookEntryJson {
                    symbol: s.0,
                    codeword: serde_json::json!(cw.iter().map(|t| t.0.clone()).collect::<Vec<_>>()),
                })
                .collect::<Vec<_>>(),
            b.halt().0,
        ),
        Codebook::Vector(b) => (
            "vector_code",
            b.entries()
                .iter()
                .map(|(s, cw)| CodebookEntryJson { symbol: s.0, codeword: serde_json::json!(cw) })
                .collect::<Vec<_>>(),
            b.halt().0,
        ),
    };
    serde_json::to_value(CodebookJson { kind: kind.to_string(), entries, halt }).unwrap()
}

/// Parses the interchange JSON form produced by [`codebook_to_json`].
pub fn codebook_from_json(value: &serde_json::Value) -> Result<Codebook, String> {
    let parsed: CodebookJson =
        serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
    let halt = SymbolId(parsed.halt);
    match parsed.kind.as_str() {
        "token_code" => {
            let mut entries = BTreeMap::new();
            for e in parsed.entries {
                let toks: Vec<String> =
                    serde_json::from_value(e.codeword).map_err(|err| err.to_string())?;
                entries.insert(SymbolId(e.symbol), toks.into_iter().map(Token).collect());
            }
            Ok(Codebook::Token(TokenCodebook::new(entries, halt)))
        }
        "vector_code" => {
            let mut entries = BTreeMap::new();
            for e in parsed.entries {
                let v: Vec<f64> =
                    serde_json::from_value(e.codeword).map_err(|err| err.to_string())?;
                entries.insert(SymbolId(e.symbol), v);
            }
            VectorCodebook::new(entries, halt)
                .map(Codebook::Vector)
                .map_err(|e| e.to_string())
        }
        other => Err(format!("unknown codebook kind {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alphabet(n: usize) -> Alphabet {
        let mut labels: Vec<String> = (0..n - 1).map(|i| format!("s{i}")).collect();
        labels.push("h".to_string());
        Alphabet::new(&labels, "h", None).unwrap()
    }

    fn tokens(n: usize) -> TokenAlphabet {
        let labels: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        TokenAlphabet::from_labels(&labels).unwrap()
    }

    #[test]
    fn pair_codebook_covers_250_symbols_with_16_tokens() {
        let a = alphabet(250);
        let book = build_pair_codebook(&a, &tokens(16)).unwrap();
        let report = check_codebook(&book, &a);
        assert!(report.is_clean(), "{:?}", report.violations);
        let tb = book.as_token().unwrap();
        assert_eq!(tb.entries().len(), 250);
        assert!(tb.entries().values().all(|cw| cw.len() == 2));
    }

    #[test]
    fn smallest_wellformed_case_uses_first_pairs() {
        let a = Alphabet::new(&["h", "s"], "h", None).unwrap();
        let book = build_pair_codebook(&a, &tokens(2)).unwrap();
        let tb = book.as_token().unwrap();
        assert_eq!(tb.encode(SymbolId(0)).unwrap(), &[Token::new("t0"), Token::new("t0")]);
        assert_eq!(tb.encode(SymbolId(1)).unwrap(), &[Token::new("t0"), Token::new("t1")]);
    }

    #[test]
    fn insufficient_tokens_is_an_error() {
        let a = alphabet(5);
        assert_eq!(
            build_pair_codebook(&a, &tokens(2)),
            Err(CodebookError::InsufficientTokens { tokens: 2, symbols: 5 })
        );
    }

    #[test]
    fn planted_collision_and_prefix_are_reported() {
        let a = alphabet(3);
        let mut entries = BTreeMap::new();
        entries.insert(SymbolId(0), vec![Token::new("a")]);
        entries.insert(SymbolId(1), vec![Token::new("a")]);
        entries.insert(SymbolId(2), vec![Token::new("a"), Token::new("b")]);
        let book = Codebook::Token(TokenCodebook::new(entries, a.halt()));
        let report = check_codebook(&book, &a);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, CodebookViolation::NotInjective { symbols } if symbols.len() == 2)));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, CodebookViolation::PrefixConflict { .. })));
    }

    #[test]
    fn vector_roundtrip_uses_nearest() {
        let a = alphabet(3);
        let mut entries = BTreeMap::new();
        entries.insert(SymbolId(0), vec![0.0, 0.0]);
        entries.insert(SymbolId(1), vec![1.0, 0.0]);
        entries.insert(SymbolId(2), vec![0.0, 1.0]);
        let book = VectorCodebook::new(entries, a.halt()).unwrap();
        assert_eq!(book.nearest(&[0.9, 0.1]).unwrap().0, SymbolId(1));
        // Exact tie between ids 1 and 2 resolves to the lower id.
        assert_eq!(book.nearest(&[1.0, 1.0]).unwrap().0, SymbolId(1));
        let report = check_codebook(&Codebook::Vector(book), &a);
        assert!(report.is_clean());
    }

    #[test]
    fn json_round_trip_preserves_entries() {
        let a = alphabet(6);
        let book = build_pair_codebook(&a, &tokens(3)).unwrap();
        let json = codebook_to_json(&book);
        let back = codebook_from_json(&json).unwrap();
        assert_eq!(book, back);
    }

    proptest! {
        // Concatenated codewords always parse back to the original symbols.
        #[test]
        fn parse_recovers_concatenations(raw in proptest::collection::vec(0u32..20, 0..40)) {
            let a = alphabet(20);
            let book = build_pair_codebook(&a, &tokens(5)).unwrap();
            let tb = book.as_token().unwrap();
            let syms: Vec<SymbolId> = raw.into_iter().map(SymbolId).collect();
            let stream: Vec<Token> = syms
                .iter()
                .flat_map(|s| tb.encode(*s).unwrap().iter().cloned())
                .collect();
            let mut parser = tb.parser();
            let mut out = Vec::new();
            for tok in stream {
                if let Some(sym) = parser.push(tok).expect("stream must stay parseable") {
                    out.push(sym);
                }
            }
            prop_assert!(parser.pending().is_empty());
            prop_assert_eq!(out, syms);
        }
    }
}
