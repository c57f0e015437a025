//! Lag-system toolkit: machine-to-machine compilation, decoding harnesses,
//! model backends, codebook training, and proof-of-simulation verification.

pub mod backends;
pub mod codebook;
pub mod compile;
pub mod decode;
pub mod verify;
pub mod lag;
pub mod symbol;
pub mod tm;

pub use codebook::{
    build_pair_codebook, check_codebook, Codebook, CodebookError, CodebookViolation, Token,
    TokenAlphabet, TokenCodebook, ValidationReport, VectorCodebook,
};
pub use lag::{
    HaltReason, LagConfiguration, LagError, LagSystem, LagTrace, ProductionRule, StepOutcome,
};
pub use symbol::{Alphabet, AlphabetError, Symbol, SymbolId, SymbolString};
pub use tm::{parse_tm, Move, StateId, TapeSym, TmConfiguration, TuringMachine};
