//! Deterministic lag-system execution.
//!
//! A lag system reads a fixed-length prefix of its string (here two symbols),
//! matches it against a production rule, appends the rule output at the end,
//! and deletes the leading symbol(s). Halting is emergent: either no rule
//! matches the prefix or the string got too short to read one.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::codebook::ValidationReport;
use crate::symbol::{Alphabet, SymbolId, SymbolString};

/// Two-symbol-prefix production rule with one or two output symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductionRule {
    pub lhs: (SymbolId, SymbolId),
    pub rhs: Vec<SymbolId>,
}

impl ProductionRule {
    pub fn new(lhs: (SymbolId, SymbolId), rhs: Vec<SymbolId>) -> Self {
        ProductionRule { lhs, rhs }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LagError {
    #[error("rule set is invalid: {0:?}")]
    InvalidRules(Vec<LagViolation>),
    #[error("string symbol {0} is not in the system alphabet")]
    ForeignSymbol(SymbolId),
    #[error("unsupported lag {0}; the rule representation reads two-symbol prefixes")]
    UnsupportedLag(usize),
    #[error("deletion {deletion} must be between 1 and lag {lag}")]
    BadDeletion { deletion: usize, lag: usize },
    #[error("rule file syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// One problem found while validating a rule list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LagViolation {
    DuplicateLhs { lhs: (SymbolId, SymbolId) },
    ForeignSymbol { rule_index: usize, symbol: SymbolId },
    RhsLength { rule_index: usize, len: usize },
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HaltReason {
    /// The two-symbol prefix matched no production rule.
    NoRuleMatch,
    /// Fewer symbols remain than the lag window needs.
    StringTooShort,
    /// The step budget ran out before the system halted.
    StepBudget,
}

/// Checks a raw rule list against `alphabet`: duplicate left-hand sides,
/// foreign symbols, and output lengths outside {1, 2}.
pub fn validate_rules(
    alphabet: &Alphabet,
    rules: &[ProductionRule],
) -> ValidationReport<LagViolation> {
    let mut violations = Vec::new();
    let mut seen: HashSet<(SymbolId, SymbolId)> = HashSet::new();
    let mut reported: HashSet<(SymbolId, SymbolId)> = HashSet::new();
    for (i, rule) in rules.iter().enumerate() {
        if !seen.insert(rule.lhs) && reported.insert(rule.lhs) {
            violations.push(LagViolation::DuplicateLhs { lhs: rule.lhs });
        }
        if !(1..=2).contains(&rule.rhs.len()) {
            violations.push(LagViolation::RhsLength { rule_index: i, len: rule.rhs.len() });
        }
        for sym in [rule.lhs.0, rule.lhs.1].iter().chain(rule.rhs.iter()) {
            if !alphabet.contains(*sym) {
                violations.push(LagViolation::ForeignSymbol { rule_index: i, symbol: *sym });
            }
        }
    }
    ValidationReport { violations }
}

/// A validated deterministic lag system.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSystem {
    pub alphabet: Alphabet,
    lag: usize,
    deletion: usize,
    rules: BTreeMap<(SymbolId, SymbolId), ProductionRule>,
}

impl LagSystem {
    /// Builds a system after validating the rule list. `lag` must be 2 (the
    /// prefix width the rule type encodes); `deletion` may be 1 or 2.
    pub fn new(
        alphabet: Alphabet,
        lag: usize,
        deletion: usize,
        rules: Vec<ProductionRule>,
    ) -> Result<Self, LagError> {
        if lag != 2 {
            return Err(LagError::UnsupportedLag(lag));
        }
        if deletion == 0 || deletion > lag {
            return Err(LagError::BadDeletion { deletion, lag });
        }
        let report = validate_rules(&alphabet, &rules);
        if !report.is_clean() {
            return Err(LagError::InvalidRules(report.violations));
        }
        let rules = rules.into_iter().map(|r| (r.lhs, r)).collect();
        Ok(LagSystem { alphabet, lag, deletion, rules })
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn deletion(&self) -> usize {
        self.deletion
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    /// Rules in lexicographic order of their left-hand symbol ids.
    pub fn rules(&self) -> impl Iterator<Item = &ProductionRule> {
        self.rules.values()
    }

    pub fn rule_for(&self, lhs: (SymbolId, SymbolId)) -> Option<&ProductionRule> {
        self.rules.get(&lhs)
    }

    /// Validation of the stored system; clean by construction, kept for
    /// report tooling that ingests systems from files.
    pub fn validate(&self) -> ValidationReport<LagViolation> {
        let rules: Vec<ProductionRule> = self.rules.values().cloned().collect();
        validate_rules(&self.alphabet, &rules)
    }

    /// Applies one step to `config`.
    pub fn step(&self, config: &LagConfiguration) -> Result<StepOutcome, LagError> {
        if config.string.len() < self.lag {
            return Ok(StepOutcome::Halted(HaltReason::StringTooShort));
        }
        let s1 = config.string[0];
        let s2 = config.string[1];
        for s in [s1, s2] {
            if !self.alphabet.contains(s) {
                return Err(LagError::ForeignSymbol(s));
            }
        }
        let Some(rule) = self.rules.get(&(s1, s2)) else {
            return Ok(StepOutcome::Halted(HaltReason::NoRuleMatch));
        };
        let mut next = config.clone();
        for _ in 0..self.deletion {
            next.string.pop_front();
        }
        next.string.extend(rule.rhs.iter().copied());
        next.step_index += 1;
        Ok(StepOutcome::Next(next))
    }

    /// Runs from `input`, recording every configuration. The trace starts at
    /// the input and ends with the halt reason; `max_steps` bounds applied
    /// rules, so the trace holds at most `max_steps + 1` configurations.
    pub fn run(&self, input: &SymbolString, max_steps: u64) -> Result<LagTrace, LagError> {
        if let Err(sym) = input.check_alphabet(&self.alphabet) {
            return Err(LagError::ForeignSymbol(sym));
        }
        let mut trace = Vec::new();
        let mut config = LagConfiguration::initial(input);
        let reason = loop {
            trace.push(config.clone());
            if config.step_index >= max_steps {
                break HaltReason::StepBudget;
            }
            match self.step(&config)? {
                StepOutcome::Next(next) => config = next,
                StepOutcome::Halted(reason) => break reason,
            }
        };
        Ok(LagTrace { configs: trace, halt: reason })
    }

    /// Runs without recording intermediate strings.
    pub fn run_final(
        &self,
        input: &SymbolString,
        max_steps: u64,
    ) -> Result<(LagConfiguration, HaltReason), LagError> {
        if let Err(sym) = input.check_alphabet(&self.alphabet) {
            return Err(LagError::ForeignSymbol(sym));
        }
        let mut config = LagConfiguration::initial(input);
        let reason = loop {
            if config.step_index >= max_steps {
                break HaltReason::StepBudget;
            }
            match self.step(&config)? {
                StepOutcome::Next(next) => config = next,
                StepOutcome::Halted(reason) => break reason,
            }
        };
        Ok((config, reason))
    }
}

/// Result of a single step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Next(LagConfiguration),
    Halted(HaltReason),
}

/// A string under execution plus how many rules have been applied to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagConfiguration {
    pub string: VecDeque<SymbolId>,
    pub step_index: u64,
}

impl LagConfiguration {
    pub fn initial(input: &SymbolString) -> Self {
        LagConfiguration { string: input.0.iter().copied().collect(), step_index: 0 }
    }

    pub fn to_symbol_string(&self) -> SymbolString {
        SymbolString(self.string.iter().copied().collect())
    }

    pub fn render(&self, alphabet: &Alphabet) -> String {
        self.to_symbol_string().render(alphabet)
    }
}

/// Full recorded run.
#[derive(Debug, Clone, PartialEq)]
pub struct LagTrace {
    pub configs: Vec<LagConfiguration>,
    pub halt: HaltReason,
}

impl LagTrace {
    pub fn final_config(&self) -> &LagConfiguration {
        self.configs.last().expect("trace always holds the initial configuration")
    }

    /// JSON Lines rendering: one `{step, string:[labels]}` object per line.
    pub fn to_jsonl(&self, alphabet: &Alphabet) -> String {
        let mut out = String::new();
        for c in &self.configs {
            let labels: Vec<&str> = c.string.iter().map(|id| alphabet.display(*id)).collect();
            out.push_str(
                &serde_json::json!({"step": c.step_index, "string": labels}).to_string(),
            );
            out.push('\n');
        }
        out.push_str(&serde_json::json!({"halt": self.halt}).to_string());
        out.push('\n');
        out
    }
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            HaltReason::NoRuleMatch => "no-rule-match",
            HaltReason::StringTooShort => "string-too-short",
            HaltReason::StepBudget => "step-budget",
        };
        f.write_str(name)
    }
}

/// Parses the rule file format: one `LHS1 LHS2 -> RHS1 [RHS2]` per line,
/// lines starting with `#` are comments, labels are whitespace-free. Returns
/// the raw rule list plus every label seen, in first-appearance order.
pub fn parse_rule_file(text: &str) -> Result<(Vec<(String, String, Vec<String>)>, Vec<String>), LagError> {
    let mut rules = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let note = |label: &str, labels: &mut Vec<String>, seen: &mut HashSet<String>| {
        if seen.insert(label.to_string()) {
            labels.push(label.to_string());
        }
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((lhs, rhs)) = line.split_once("->") else {
            return Err(LagError::Syntax {
                line: lineno + 1,
                message: "expected `LHS1 LHS2 -> RHS...`".into(),
            });
        };
        let lhs: Vec<&str> = lhs.split_whitespace().collect();
        let rhs: Vec<&str> = rhs.split_whitespace().collect();
        if lhs.len() != 2 {
            return Err(LagError::Syntax {
                line: lineno + 1,
                message: format!("expected exactly 2 prefix symbols, got {}", lhs.len()),
            });
        }
        if rhs.is_empty() || rhs.len() > 2 {
            return Err(LagError::Syntax {
                line: lineno + 1,
                message: format!("expected 1 or 2 output symbols, got {}", rhs.len()),
            });
        }
        for l in lhs.iter().chain(rhs.iter()) {
            note(l, &mut labels, &mut seen);
        }
        rules.push((
            lhs[0].to_string(),
            lhs[1].to_string(),
            rhs.iter().map(|s| s.to_string()).collect(),
        ));
    }
    Ok((rules, labels))
}

/// Loads a standalone rule file into a system. The alphabet is inferred from
/// the rules; `halt_label` is appended as a fresh symbol when absent (a bare
/// rule file cannot name its halt symbol, so the loader owns that choice).
pub fn load_rule_file(text: &str, halt_label: &str) -> Result<(LagSystem, Vec<ProductionRule>), LagError> {
    let (raw_rules, mut labels) = parse_rule_file(text)?;
    if !labels.iter().any(|l| l == halt_label) {
        labels.push(halt_label.to_string());
    }
    if labels.len() < 2 {
        labels.push("_pad".to_string());
    }
    let alphabet = Alphabet::new(&labels, halt_label, None)
        .map_err(|e| LagError::Syntax { line: 0, message: e.to_string() })?;
    let mut rules = Vec::new();
    for (a, b, rhs) in raw_rules {
        let lhs = (alphabet.lookup(&a).unwrap(), alphabet.lookup(&b).unwrap());
        let rhs = rhs.iter().map(|s| alphabet.lookup(s).unwrap()).collect();
        rules.push(ProductionRule::new(lhs, rhs));
    }
    let system = LagSystem::new(alphabet, 2, 1, rules.clone())?;
    Ok((system, rules))
}

/// Renders a system back into the rule file format.
pub fn render_rule_file(system: &LagSystem) -> String {
    let mut out = String::new();
    for rule in system.rules() {
        let a = system.alphabet.display(rule.lhs.0);
        let b = system.alphabet.display(rule.lhs.1);
        let rhs: Vec<&str> = rule.rhs.iter().map(|s| system.alphabet.display(*s)).collect();
        out.push_str(&format!("{a} {b} -> {}\n", rhs.join(" ")));
    }
    out
}
