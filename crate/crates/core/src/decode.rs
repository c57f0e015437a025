//! Decoding modes and the extended-step simulation driver.
//!
//! Three windowed readings of a next-token model:
//!
//! * standard: the window pins to the end of the operational string, so a
//!   too-long input silently loses its beginning;
//! * generalized: the window pins to the beginning and slides forward one
//!   position per step once full, so every input token is eventually read;
//! * extended: one step may emit several codewords, terminated by the halt
//!   codeword, and the decoded symbols append to the operational string
//!   while a cursor advances exactly one symbol.
//!
//! Extended decoding over a two-symbol window is the lag-system step, which
//! is what [`simulate_lag`] exercises.

use std::sync::Arc;

use thiserror::Error;

use crate::codebook::{Codebook, Token};
use crate::lag::HaltReason;
use crate::symbol::{SymbolId, SymbolString};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Token,
    Vector,
}

/// Query context handed to a backend: a flat token sequence or a sequence of
/// codeword vectors.
#[derive(Debug, Clone)]
pub enum Context<'a> {
    Tokens(&'a [Token]),
    Vectors(&'a [Vec<f64>]),
}

/// One backend response: a token segment (possibly the whole remainder of a
/// step) or a single raw output vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Tokens(Vec<Token>),
    Vector(Vec<f64>),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider refusal: {0}")]
    Refusal(String),
    #[error("cache corruption: {0}")]
    CacheCorruption(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Other(String),
}

/// Deterministic next-output oracle. Equal contexts must yield equal
/// responses within a process and across runs under equal configuration.
pub trait ModelBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    /// Maximum number of tokens (or codeword vectors) consumed per query.
    fn context_window(&self) -> usize;
    fn respond(&self, context: &Context) -> Result<Response, BackendError>;
    /// Whether many workers may query concurrently.
    fn share_safe(&self) -> bool {
        true
    }
    /// Stable identity string recorded in reports.
    fn identity(&self) -> String;
}

/// Maps a raw model output vector to a symbol. The default rule is nearest
/// codeword; trained decoders plug in here.
pub trait VectorSymbolDecoder: Send + Sync {
    fn decode_symbol(&self, raw: &[f64]) -> Option<SymbolId>;
}

/// Nearest-codeword decoding over a vector codebook.
pub struct NearestDecoder(pub Arc<crate::codebook::VectorCodebook>);

impl VectorSymbolDecoder for NearestDecoder {
    fn decode_symbol(&self, raw: &[f64]) -> Option<SymbolId> {
        self.0.nearest(raw).map(|(s, _)| s)
    }
}

/// Generates `k` tokens with the window pinned to the end: at each step the
/// model sees the most recent `N` tokens of input plus generated output.
pub fn standard_decode(
    model: &dyn ModelBackend,
    input: &[Token],
    k: usize,
) -> Result<Vec<Token>, BackendError> {
    let n = model.context_window();
    let mut operational: Vec<Token> = input.to_vec();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let start = operational.len().saturating_sub(n);
        let next = next_token(model, &operational[start..])?;
        operational.push(next.clone());
        out.push(next);
    }
    Ok(out)
}

/// Generates `k` tokens with the window pinned to the beginning: the window
/// start stays at zero until the window is full, then advances one position
/// per step so the whole operational string is eventually read.
pub fn generalized_decode(
    model: &dyn ModelBackend,
    input: &[Token],
    k: usize,
) -> Result<Vec<Token>, BackendError> {
    let n = model.context_window();
    let mut operational: Vec<Token> = input.to_vec();
    let mut out = Vec::with_capacity(k);
    let mut start = 0usize;
    while out.len() < k {
        let end = (start + n).min(operational.len());
        let next = next_token(model, &operational[start..end])?;
        operational.push(next.clone());
        out.push(next);
        // Slide forward one position per step once the window is full, so
        // the whole operational string is eventually read.
        if operational.len() - start > n {
            start += 1;
        }
    }
    Ok(out)
}

fn next_token(model: &dyn ModelBackend, window: &[Token]) -> Result<Token, BackendError> {
    match model.respond(&Context::Tokens(window))? {
        Response::Tokens(mut toks) if !toks.is_empty() => Ok(toks.remove(0)),
        Response::Tokens(_) => Err(BackendError::Other("backend returned no tokens".into())),
        Response::Vector(_) => Err(BackendError::Other(
            "vector backend used in token decoding".into(),
        )),
    }
}

/// The unboundedly growing string plus the read cursor.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationalString {
    pub symbols: Vec<SymbolId>,
    pub cursor: usize,
}

impl OperationalString {
    pub fn new(input: &SymbolString) -> Self {
        OperationalString { symbols: input.0.clone(), cursor: 0 }
    }

    /// The still-active suffix, which mirrors the lag engine's string.
    pub fn active(&self) -> &[SymbolId] {
        &self.symbols[self.cursor..]
    }
}

/// Driver configuration for extended decoding.
pub struct SimulationConfig {
    /// System prompt tokens, prepended to every token-backend query.
    pub system_prompt: Vec<Token>,
    pub codebook: Codebook,
    /// Decoder for vector backends; nearest-codeword when absent.
    pub vector_decoder: Option<Arc<dyn VectorSymbolDecoder>>,
    /// Cap on codewords parsed per step, halt included. At least 2.
    pub max_output_codewords_per_step: usize,
    pub step_budget: u64,
}

impl SimulationConfig {
    pub fn new(codebook: Codebook) -> Self {
        SimulationConfig {
            system_prompt: Vec::new(),
            codebook,
            vector_decoder: None,
            max_output_codewords_per_step: 3,
            step_budget: 10_000,
        }
    }

    pub fn with_prompt(mut self, prompt: Vec<Token>) -> Self {
        self.system_prompt = prompt;
        self
    }
}

/// What went wrong inside one extended step.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum ViolationKind {
    /// The first codeword decoded to the halt symbol: an empty production.
    EmptyProduction,
    /// The per-step cap was reached without a halt codeword.
    NoHalt,
    /// Output failed codebook parsing.
    ParseFailure,
    /// The backend failed to answer.
    Transport,
}

/// A protocol violation with the offending query context rendered for reports.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("protocol violation {kind:?} on context: {context}")]
pub struct ProtocolViolation {
    pub kind: ViolationKind,
    pub context: String,
}

/// Result of one extended step.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtendedStep {
    /// Decoded non-halt symbols appended; the cursor advanced by one.
    Appended(Vec<SymbolId>),
    /// Fewer than two symbols remain beyond the cursor.
    Halted(HaltReason),
}

/// Runs one extended decoding step over the two symbols at the cursor.
pub fn extended_decode_step(
    model: &dyn ModelBackend,
    config: &SimulationConfig,
    op: &mut OperationalString,
) -> Result<ExtendedStep, ProtocolViolation> {
    if op.cursor + 2 > op.symbols.len() {
        return Ok(ExtendedStep::Halted(HaltReason::StringTooShort));
    }
    let s1 = op.symbols[op.cursor];
    let s2 = op.symbols[op.cursor + 1];
    let halt = config.codebook.halt();
    let produced = match (&config.codebook, model.kind()) {
        (Codebook::Token(book), BackendKind::Token) => {
            token_step(model, config, book, s1, s2, halt)?
        }
        (Codebook::Vector(book), BackendKind::Vector) => {
            vector_step(model, config, book, s1, s2, halt)?
        }
        _ => {
            return Err(ProtocolViolation {
                kind: ViolationKind::Transport,
                context: "backend kind does not match codebook kind".into(),
            })
        }
    };
    op.symbols.extend(produced.iter().copied());
    op.cursor += 1;
    Ok(ExtendedStep::Appended(produced))
}

fn render_tokens(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ")
}

fn token_step(
    model: &dyn ModelBackend,
    config: &SimulationConfig,
    book: &crate::codebook::TokenCodebook,
    s1: SymbolId,
    s2: SymbolId,
    halt: SymbolId,
) -> Result<Vec<SymbolId>, ProtocolViolation> {
    let mut context: Vec<Token> = config.system_prompt.clone();
    for s in [s1, s2] {
        let Some(cw) = book.encode(s) else {
            return Err(ProtocolViolation {
                kind: ViolationKind::ParseFailure,
                context: format!("symbol {s} has no codeword"),
            });
        };
        context.extend(cw.iter().cloned());
    }
    let violation = |kind: ViolationKind, context: &[Token]| ProtocolViolation {
        kind,
        context: render_tokens(context),
    };

    let mut produced: Vec<SymbolId> = Vec::new();
    let mut parser = book.parser();
    let mut decoded_count = 0usize;
    // Bounded queries: a full response may carry several codewords, a
    // single-token backend needs one query per token.
    let max_queries = config.max_output_codewords_per_step * 8 + 4;
    let mut pending: Vec<Token> = Vec::new();
    for _ in 0..max_queries {
        if pending.is_empty() {
            let response = model
                .respond(&Context::Tokens(&context))
                .map_err(|e| ProtocolViolation {
                    kind: ViolationKind::Transport,
                    context: format!("{e} on: {}", render_tokens(&context)),
                })?;
            match response {
                Response::Tokens(toks) if !toks.is_empty() => pending = toks,
                _ => return Err(violation(ViolationKind::ParseFailure, &context)),
            }
        }
        let tok = pending.remove(0);
        context.push(tok.clone());
        match parser.push(tok) {
            Ok(Some(sym)) => {
                decoded_count += 1;
                if sym == halt {
                    if produced.is_empty() {
                        return Err(violation(ViolationKind::EmptyProduction, &context));
                    }
                    return Ok(produced);
                }
                produced.push(sym);
                if decoded_count >= config.max_output_codewords_per_step {
                    return Err(violation(ViolationKind::NoHalt, &context));
                }
            }
            Ok(None) => {}
            Err(_) => return Err(violation(ViolationKind::ParseFailure, &context)),
        }
    }
    Err(violation(ViolationKind::NoHalt, &context))
}

fn vector_step(
    model: &dyn ModelBackend,
    config: &SimulationConfig,
    book: &crate::codebook::VectorCodebook,
    s1: SymbolId,
    s2: SymbolId,
    halt: SymbolId,
) -> Result<Vec<SymbolId>, ProtocolViolation> {
    let encode = |s: SymbolId| -> Result<Vec<f64>, ProtocolViolation> {
        book.encode(s).map(|v| v.to_vec()).ok_or_else(|| ProtocolViolation {
            kind: ViolationKind::ParseFailure,
            context: format!("symbol {s} has no codeword"),
        })
    };
    let mut context: Vec<Vec<f64>> = vec![encode(s1)?, encode(s2)?];
    let decode = |raw: &[f64]| -> Option<SymbolId> {
        match &config.vector_decoder {
            Some(d) => d.decode_symbol(raw),
            None => book.nearest(raw).map(|(s, _)| s),
        }
    };
    let mut produced: Vec<SymbolId> = Vec::new();
    for count in 0..config.max_output_codewords_per_step {
        let raw = match model.respond(&Context::Vectors(&context)) {
            Ok(Response::Vector(v)) => v,
            Ok(_) => {
                return Err(ProtocolViolation {
                    kind: ViolationKind::ParseFailure,
                    context: format!("token response on vector query ({s1}, {s2})"),
                })
            }
            Err(e) => {
                return Err(ProtocolViolation {
                    kind: ViolationKind::Transport,
                    context: format!("{e} on vector query ({s1}, {s2})"),
                })
            }
        };
        let Some(sym) = decode(&raw) else {
            return Err(ProtocolViolation {
                kind: ViolationKind::ParseFailure,
                context: format!("undecodable output vector on query ({s1}, {s2})"),
            });
        };
        if sym == halt {
            if produced.is_empty() {
                return Err(ProtocolViolation {
                    kind: ViolationKind::EmptyProduction,
                    context: format!("halt as first output on query ({s1}, {s2})"),
                });
            }
            return Ok(produced);
        }
        produced.push(sym);
        // Feed back the decoded symbol's encoder codeword, not the raw output.
        context.push(encode(sym)?);
        let _ = count;
    }
    Err(ProtocolViolation {
        kind: ViolationKind::NoHalt,
        context: format!("no halt within cap on query ({s1}, {s2})"),
    })
}

/// One recorded simulation step.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SimStep {
    pub step: u64,
    pub appended: Vec<SymbolId>,
    pub cursor: usize,
    pub string_len: usize,
}

/// How a simulation ended.
#[derive(Debug, Clone, PartialEq)]
pub enum SimEnd {
    Halted(HaltReason),
    Budget,
    Violation(ProtocolViolation),
}

/// Full extended-decoding simulation record.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub input_len: usize,
    pub steps: Vec<SimStep>,
    pub operational: OperationalString,
    pub end: SimEnd,
}

impl SimTrace {
    /// The string a lag system would hold after `k` steps: the slice from
    /// the cursor position to the recorded length at that step. Appends only
    /// ever extend the operational string, so the prefix is immutable.
    pub fn lag_string_at(&self, k: usize) -> Option<&[SymbolId]> {
        let len = if k == 0 {
            self.input_len
        } else {
            self.steps.get(k - 1)?.string_len
        };
        self.operational.symbols.get(k..len)
    }

    /// Number of completed extended steps.
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// JSON Lines rendering with a full-string snapshot every
    /// `snapshot_every` steps (0 disables snapshots).
    pub fn to_jsonl(&self, snapshot_every: u64) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let mut line = serde_json::json!({
                "step": s.step,
                "appended": s.appended,
                "cursor": s.cursor,
                "string_len": s.string_len,
            });
            if snapshot_every > 0 && s.step % snapshot_every == 0 {
                line["snapshot"] =
                    serde_json::json!(self.operational.symbols[..s.string_len.min(self.operational.symbols.len())]);
            }
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Iterates extended decoding over `input` until halt, violation, or budget.
pub fn simulate_lag(
    model: &dyn ModelBackend,
    config: &SimulationConfig,
    input: &SymbolString,
) -> SimTrace {
    let mut op = OperationalString::new(input);
    let mut steps = Vec::new();
    let mut step_index: u64 = 0;
    let end = loop {
        if step_index >= config.step_budget {
            break SimEnd::Budget;
        }
        match extended_decode_step(model, config, &mut op) {
            Ok(ExtendedStep::Appended(appended)) => {
                step_index += 1;
                steps.push(SimStep {
                    step: step_index,
                    appended,
                    cursor: op.cursor,
                    string_len: op.symbols.len(),
                });
            }
            Ok(ExtendedStep::Halted(reason)) => break SimEnd::Halted(reason),
            Err(violation) => break SimEnd::Violation(violation),
        }
    };
    SimTrace { input_len: input.len(), steps, operational: op, end }
}
