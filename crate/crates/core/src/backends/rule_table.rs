//! Exact rule-table oracle backend.
//!
//! Realizes the production rules directly: for a context that encodes a
//! two-symbol prefix it emits the rule's output codewords followed by the
//! halt codeword, one token per query. Its behavior equals the lag system by
//! construction, which makes it the ground truth for harness and verifier
//! tests. A context whose prefix matches no rule yields an unparseable
//! token, surfacing upstream as a protocol violation.

use std::collections::HashMap;
use std::sync::Arc;

use crate::codebook::{Codebook, Token};
use crate::decode::{BackendError, BackendKind, Context, ModelBackend, Response};
use crate::lag::LagSystem;
use crate::symbol::SymbolId;

pub struct RuleTableBackend {
    system: Arc<LagSystem>,
    codebook: Arc<Codebook>,
    prompt_len: usize,
    /// Planted faults: rules whose output is deliberately corrupted, for
    /// fault-injection tests. Maps a prefix to the wrong output symbols.
    corrupted: HashMap<(SymbolId, SymbolId), Vec<SymbolId>>,
    window: usize,
}

impl RuleTableBackend {
    pub fn new(system: Arc<LagSystem>, codebook: Arc<Codebook>, prompt_len: usize) -> Self {
        RuleTableBackend { system, codebook, prompt_len, corrupted: HashMap::new(), window: 4096 }
    }

    /// Corrupts exactly one rule: queries on `lhs` answer `wrong` instead of
    /// the true output.
    pub fn with_corrupted_rule(mut self, lhs: (SymbolId, SymbolId), wrong: Vec<SymbolId>) -> Self {
        self.corrupted.insert(lhs, wrong);
        self
    }

    /// The full expected output token stream for a prefix, halt included.
    fn output_tokens(&self, s1: SymbolId, s2: SymbolId) -> Option<Vec<Token>> {
        let book = self.codebook.as_token()?;
        let out_syms: Vec<SymbolId> = match self.corrupted.get(&(s1, s2)) {
            Some(wrong) => wrong.clone(),
            None => self.system.rule_for((s1, s2))?.rhs.clone(),
        };
        let mut tokens = Vec::new();
        for sym in out_syms.iter().chain(std::iter::once(&book.halt())) {
            tokens.extend(book.encode(*sym)?.iter().cloned());
        }
        Some(tokens)
    }
}

impl ModelBackend for RuleTableBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Token
    }

    fn context_window(&self) -> usize {
        self.window
    }

    fn respond(&self, context: &Context) -> Result<Response, BackendError> {
        let Context::Tokens(tokens) = context else {
            return Err(BackendError::Other("rule table backend expects tokens".into()));
        };
        let noise = || Response::Tokens(vec![Token::new("!noise")]);
        let Some(book) = self.codebook.as_token() else {
            return Err(BackendError::Other("rule table backend needs a token codebook".into()));
        };
        if tokens.len() < self.prompt_len {
            return Ok(noise());
        }
        // Parse the prefix pair after the system prompt.
        let mut parser = book.parser();
        let mut symbols: Vec<SymbolId> = Vec::new();
        let mut consumed = self.prompt_len;
        for tok in &tokens[self.prompt_len..] {
            consumed += 1;
            match parser.push(tok.clone()) {
                Ok(Some(sym)) => {
                    symbols.push(sym);
                    if symbols.len() == 2 {
                        break;
                    }
                }
                Ok(None) => {}
                Err(_) => return Ok(noise()),
            }
        }
        if symbols.len() < 2 {
            return Ok(noise());
        }
        let Some(expected) = self.output_tokens(symbols[0], symbols[1]) else {
            return Ok(noise());
        };
        // Emit the next token after whatever output is already present.
        let already = tokens.len() - consumed;
        match expected.get(already) {
            Some(tok) => Ok(Response::Tokens(vec![tok.clone()])),
            None => Ok(noise()),
        }
    }

    fn identity(&self) -> String {
        format!("rule-table({} rules)", self.system.rule_count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{build_pair_codebook, TokenAlphabet};
    use crate::decode::{
        extended_decode_step, simulate_lag, ExtendedStep, OperationalString, ProtocolViolation,
        SimEnd, SimulationConfig, ViolationKind,
    };
    use crate::lag::{LagConfiguration, ProductionRule};
    use crate::symbol::{Alphabet, SymbolString};

    fn setup() -> (Arc<LagSystem>, Arc<Codebook>) {
        let a = Alphabet::new(&["A", "B", "C", "D", "Q", "h"], "h", None).unwrap();
        let sym = |l: &str| a.lookup(l).unwrap();
        let rules = vec![
            ProductionRule::new((sym("A"), sym("B")), vec![sym("C")]),
            ProductionRule::new((sym("B"), sym("Q")), vec![sym("C"), sym("D")]),
            ProductionRule::new((sym("B"), sym("C")), vec![sym("B")]),
            ProductionRule::new((sym("Q"), sym("C")), vec![sym("Q")]),
        ];
        let system = LagSystem::new(a.clone(), 2, 1, rules).unwrap();
        let tokens = TokenAlphabet::from_labels(&["t0", "t1", "t2"]).unwrap();
        let book = build_pair_codebook(&a, &tokens).unwrap();
        (Arc::new(system), Arc::new(book))
    }

    #[test]
    fn emits_rule_output_token_by_token() {
        let (system, book) = setup();
        let backend = RuleTableBackend::new(system.clone(), book.clone(), 0);
        let config = SimulationConfig::new((*book).clone());
        let a = &system.alphabet;
        let input = SymbolString::parse("A B Q", a).unwrap();
        let mut op = OperationalString::new(&input);
        let step = extended_decode_step(&backend, &config, &mut op).unwrap();
        assert_eq!(step, ExtendedStep::Appended(vec![a.lookup("C").unwrap()]));
        assert_eq!(op.cursor, 1);
        assert_eq!(
            SymbolString(op.active().to_vec()).render(a),
            "B Q C"
        );
    }

    #[test]
    fn simulation_matches_lag_engine_trace() {
        let (system, book) = setup();
        let backend = RuleTableBackend::new(system.clone(), book.clone(), 0);
        let config = SimulationConfig::new((*book).clone());
        let input = SymbolString::parse("A B Q", &system.alphabet).unwrap();
        let sim = simulate_lag(&backend, &config, &input);
        let lag = system.run(&input, config.step_budget).unwrap();
        for (k, cfg) in lag.configs.iter().enumerate() {
            let lag_string: Vec<_> = cfg.string.iter().copied().collect();
            assert_eq!(sim.lag_string_at(k).unwrap(), &lag_string[..], "step {k}");
        }
        // The lag system halts on NoRuleMatch; the oracle surfaces the same
        // point as an unparseable answer.
        assert!(matches!(
            sim.end,
            SimEnd::Violation(ProtocolViolation { kind: ViolationKind::ParseFailure, .. })
        ));
        assert_eq!(sim.steps.len(), lag.configs.len() - 1);
        let _ = LagConfiguration::initial(&input);
    }

    #[test]
    fn empty_input_halts_short() {
        let (_, book) = setup();
        let (system, _) = setup();
        let backend = RuleTableBackend::new(system, book.clone(), 0);
        let config = SimulationConfig::new((*book).clone());
        let sim = simulate_lag(&backend, &config, &SymbolString::default());
        assert_eq!(sim.end, SimEnd::Halted(crate::lag::HaltReason::StringTooShort));
    }

    /// Backend that halts immediately: first codeword is the halt codeword.
    struct ImmediateHalt(Arc<Codebook>);
    impl ModelBackend for ImmediateHalt {
        fn kind(&self) -> BackendKind {
            BackendKind::Token
        }
        fn context_window(&self) -> usize {
            4096
        }
        fn respond(&self, context: &Context) -> Result<Response, BackendError> {
            let Context::Tokens(toks) = context else { unreachable!() };
            let book = self.0.as_token().unwrap();
            let halt_cw = book.encode(book.halt()).unwrap();
            let idx = (toks.len() - 4) % halt_cw.len();
            Ok(Response::Tokens(vec![halt_cw[idx].clone()]))
        }
        fn identity(&self) -> String {
            "immediate-halt".into()
        }
    }

    #[test]
    fn immediate_halt_is_empty_production() {
        let (system, book) = setup();
        let backend = ImmediateHalt(book.clone());
        let config = SimulationConfig::new((*book).clone());
        let input = SymbolString::parse("A B", &system.alphabet).unwrap();
        let mut op = OperationalString::new(&input);
        let err = extended_decode_step(&backend, &config, &mut op).unwrap_err();
        assert_eq!(err.kind, ViolationKind::EmptyProduction);
    }

    /// Backend that never halts: emits codewords for symbol A forever.
    struct NeverHalt(Arc<Codebook>, SymbolId);
    impl ModelBackend for NeverHalt {
        fn kind(&self) -> BackendKind {
            BackendKind::Token
        }
        fn context_window(&self) -> usize {
            4096
        }
        fn respond(&self, context: &Context) -> Result<Response, BackendError> {
            let Context::Tokens(toks) = context else { unreachable!() };
            let book = self.0.as_token().unwrap();
            let cw = book.encode(self.1).unwrap();
            let idx = (toks.len() - 4) % cw.len();
            Ok(Response::Tokens(vec![cw[idx].clone()]))
        }
        fn identity(&self) -> String {
            "never-halt".into()
        }
    }

    #[test]
    fn missing_halt_under_cap_is_no_halt() {
        let (system, book) = setup();
        let a_sym = system.alphabet.lookup("A").unwrap();
        let backend = NeverHalt(book.clone(), a_sym);
        let config = SimulationConfig::new((*book).clone());
        let input = SymbolString::parse("A B", &system.alphabet).unwrap();
        let mut op = OperationalString::new(&input);
        let err = extended_decode_step(&backend, &config, &mut op).unwrap_err();
        assert_eq!(err.kind, ViolationKind::NoHalt);
    }

    #[test]
    fn corrupted_rule_diverges_at_first_use() {
        let (system, book) = setup();
        let a = &system.alphabet;
        let lhs = (a.lookup("B").unwrap(), a.lookup("Q").unwrap());
        let backend = RuleTableBackend::new(system.clone(), book.clone(), 0)
            .with_corrupted_rule(lhs, vec![a.lookup("Q").unwrap()]);
        let config = SimulationConfig::new((*book).clone());
        let input = SymbolString::parse("A B Q", a).unwrap();
        let sim = simulate_lag(&backend, &config, &input);
        let lag = system.run(&input, 100).unwrap();
        // Step 1 consumes (A,B) identically; step 2 uses the corrupted rule.
        assert_eq!(
            sim.lag_string_at(1).unwrap(),
            &lag.configs[1].string.iter().copied().collect::<Vec<_>>()[..]
        );
        assert_ne!(
            sim.lag_string_at(2).unwrap(),
            &lag.configs[2].string.iter().copied().collect::<Vec<_>>()[..]
        );
    }
}
