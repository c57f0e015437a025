//! Classical single-tape Turing machine engine.
//!
//! Configurations keep the tape as two nearest-first sequences around the
//! head with trailing blanks trimmed, so configuration equality is plain
//! syntactic equality. Missing transitions halt by default; strict parsing
//! turns them into validation errors instead.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Interned machine state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

/// Interned tape symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct TapeSym(pub u32);

/// Head movement; stay-moves are out of scope for this machine class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Move {
    Left,
    Right,
}

#[derive(Debug, Error, PartialEq)]
pub enum TmError {
    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("undeclared {kind} {name:?} on line {line}")]
    Undeclared { kind: &'static str, name: String, line: usize },
    #[error("duplicate transition for ({state}, {symbol}) on line {line}")]
    DuplicateTransition { state: String, symbol: String, line: usize },
    #[error("strict mode: state {state} has no transition for symbol {symbol}")]
    MissingTransition { state: String, symbol: String },
}

/// A deterministic single-tape Turing machine.
#[derive(Debug, Clone, PartialEq)]
pub struct TuringMachine {
    state_names: Vec<String>,
    symbol_names: Vec<String>,
    pub blank: TapeSym,
    pub start: StateId,
    pub halting: BTreeSet<StateId>,
    transitions: HashMap<(StateId, TapeSym), (TapeSym, Move, StateId)>,
}

impl TuringMachine {
    pub fn state_count(&self) -> usize {
        self.state_names.len()
    }

    pub fn symbol_count(&self) -> usize {
        self.symbol_names.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.state_names.len() as u32).map(StateId)
    }

    pub fn symbols(&self) -> impl Iterator<Item = TapeSym> + '_ {
        (0..self.symbol_names.len() as u32).map(TapeSym)
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.state_names[s.0 as usize]
    }

    pub fn symbol_name(&self, s: TapeSym) -> &str {
        &self.symbol_names[s.0 as usize]
    }

    pub fn lookup_state(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name).map(|i| StateId(i as u32))
    }

    pub fn lookup_symbol(&self, name: &str) -> Option<TapeSym> {
        self.symbol_names.iter().position(|n| n == name).map(|i| TapeSym(i as u32))
    }

    pub fn transition(&self, state: StateId, read: TapeSym) -> Option<(TapeSym, Move, StateId)> {
        self.transitions.get(&(state, read)).copied()
    }

    pub fn is_halting(&self, state: StateId) -> bool {
        self.halting.contains(&state)
    }

    /// A configuration is terminal when its state halts or no transition fits.
    pub fn is_terminal(&self, config: &TmConfiguration) -> bool {
        self.is_halting(config.state) || self.transition(config.state, config.head).is_none()
    }

    /// Initial configuration: head on the first input symbol (blank tape when
    /// the input is empty).
    pub fn initial_config(&self, input: &[TapeSym]) -> TmConfiguration {
        let head = input.first().copied().unwrap_or(self.blank);
        let right: Vec<TapeSym> = input.iter().skip(1).copied().collect();
        TmConfiguration::canonical(Vec::new(), head, right, self.start, self.blank)
    }

    /// Applies the unique transition, or reports the halt.
    pub fn step(&self, config: &TmConfiguration) -> TmStepOutcome {
        if self.is_halting(config.state) {
            return TmStepOutcome::Halted;
        }
        let Some((write, mv, next_state)) = self.transition(config.state, config.head) else {
            return TmStepOutcome::Halted;
        };
        let mut left = config.left.clone();
        let mut right = config.right.clone();
        let (head, left, right) = match mv {
            Move::Right => {
                left.insert(0, write);
                let head = if right.is_empty() { self.blank } else { right.remove(0) };
                (head, left, right)
            }
            Move::Left => {
                right.insert(0, write);
                let head = if left.is_empty() { self.blank } else { left.remove(0) };
                (head, left, right)
            }
        };
        TmStepOutcome::Next(TmConfiguration::canonical(left, head, right, next_state, self.blank))
    }

    /// Runs up to `max_steps`, recording every configuration.
    pub fn run(&self, config: &TmConfiguration, max_steps: u64) -> TmTrace {
        let mut configs = vec![config.clone()];
        let mut current = config.clone();
        let mut steps = 0;
        let end = loop {
            if steps >= max_steps {
                break TmTraceEnd::StepBudget;
            }
            match self.step(&current) {
                TmStepOutcome::Next(next) => {
                    current = next;
                    configs.push(current.clone());
                    steps += 1;
                }
                TmStepOutcome::Halted => break TmTraceEnd::Halted,
            }
        };
        TmTrace { configs, end }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TmStepOutcome {
    Next(TmConfiguration),
    Halted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TmTraceEnd {
    Halted,
    StepBudget,
}

/// Canonical machine configuration: tape halves nearest-first, no trailing
/// blanks at the far ends.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TmConfiguration {
    pub left: Vec<TapeSym>,
    pub head: TapeSym,
    pub right: Vec<TapeSym>,
    pub state: StateId,
}

impl TmConfiguration {
    pub fn canonical(
        mut left: Vec<TapeSym>,
        head: TapeSym,
        mut right: Vec<TapeSym>,
        state: StateId,
        blank: TapeSym,
    ) -> Self {
        while left.last() == Some(&blank) {
            left.pop();
        }
        while right.last() == Some(&blank) {
            right.pop();
        }
        TmConfiguration { left, head, right, state }
    }

    /// Tape rendered left to right with the head cell bracketed.
    pub fn render(&self, machine: &TuringMachine) -> String {
        let mut parts: Vec<String> = self
            .left
            .iter()
            .rev()
            .map(|s| machine.symbol_name(*s).to_string())
            .collect();
        parts.push(format!("[{}:{}]", machine.state_name(self.state), machine.symbol_name(self.head)));
        parts.extend(self.right.iter().map(|s| machine.symbol_name(*s).to_string()));
        parts.join(" ")
    }

    /// The tape left to right without markers, trailing blanks trimmed.
    pub fn tape_string(&self, machine: &TuringMachine) -> String {
        let mut cells: Vec<TapeSym> = self.left.iter().rev().copied().collect();
        cells.push(self.head);
        cells.extend(self.right.iter().copied());
        while cells.first() == Some(&machine.blank) {
            cells.remove(0);
        }
        while cells.last() == Some(&machine.blank) {
            cells.pop();
        }
        cells.iter().map(|s| machine.symbol_name(*s)).collect::<Vec<_>>().join("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmTrace {
    pub configs: Vec<TmConfiguration>,
    pub end: TmTraceEnd,
}

impl TmTrace {
    pub fn final_config(&self) -> &TmConfiguration {
        self.configs.last().expect("trace always holds the initial configuration")
    }

    pub fn steps(&self) -> usize {
        self.configs.len() - 1
    }

    /// JSON Lines rendering: `{step, state, left, head, right}` per line.
    pub fn to_jsonl(&self, machine: &TuringMachine) -> String {
        let mut out = String::new();
        for (i, c) in self.configs.iter().enumerate() {
            let left: Vec<&str> = c.left.iter().map(|s| machine.symbol_name(*s)).collect();
            let right: Vec<&str> = c.right.iter().map(|s| machine.symbol_name(*s)).collect();
            out.push_str(
                &serde_json::json!({
                    "step": i,
                    "state": machine.state_name(c.state),
                    "left": left,
                    "head": machine.symbol_name(c.head),
                    "right": right,
                })
                .to_string(),
            );
            out.push('\n');
        }
        out.push_str(&serde_json::json!({"end": self.end}).to_string());
        out.push('\n');
        out
    }
}

/// Parses the machine file format:
///
/// ```text
/// states: q0 q1 qh
/// alphabet: 0 1 _
/// blank: _
/// start: q0
/// halt: qh
/// q0 0 -> 1 R qh
/// ```
pub fn parse_tm(text: &str) -> Result<TuringMachine, TmError> {
    parse_tm_with(text, false)
}

/// Like [`parse_tm`], with strict mode making missing transitions an error.
pub fn parse_tm_with(text: &str, strict: bool) -> Result<TuringMachine, TmError> {
    let mut states: Option<Vec<String>> = None;
    let mut symbols: Option<Vec<String>> = None;
    let mut blank: Option<String> = None;
    let mut start: Option<String> = None;
    let mut halting: Vec<String> = Vec::new();
    let mut raw_transitions: Vec<(usize, Vec<String>)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = lineno + 1;
        if let Some(rest) = line.strip_prefix("states:") {
            states = Some(rest.split_whitespace().map(str::to_string).collect());
        } else if let Some(rest) = line.strip_prefix("alphabet:") {
            symbols = Some(rest.split_whitespace().map(str::to_string).collect());
        } else if let Some(rest) = line.strip_prefix("blank:") {
            blank = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("start:") {
            start = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("halt:") {
            halting.extend(rest.split_whitespace().map(str::to_string));
        } else {
            let parts: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            raw_transitions.push((lineno, parts));
        }
    }

    let state_names = states.ok_or(TmError::Syntax { line: 0, message: "missing states: header".into() })?;
    let symbol_names =
        symbols.ok_or(TmError::Syntax { line: 0, message: "missing alphabet: header".into() })?;
    let find_state = |name: &str, line: usize| {
        state_names
            .iter()
            .position(|n| n == name)
            .map(|i| StateId(i as u32))
            .ok_or(TmError::Undeclared { kind: "state", name: name.to_string(), line })
    };
    let find_symbol = |name: &str, line: usize| {
        symbol_names
            .iter()
            .position(|n| n == name)
            .map(|i| TapeSym(i as u32))
            .ok_or(TmError::Undeclared { kind: "symbol", name: name.to_string(), line })
    };

    let blank_name =
        blank.ok_or(TmError::Syntax { line: 0, message: "missing blank: header".into() })?;
    let blank = find_symbol(&blank_name, 0)?;
    let start_name =
        start.ok_or(TmError::Syntax { line: 0, message: "missing start: header".into() })?;
    let start = find_state(&start_name, 0)?;
    let mut halt_set = BTreeSet::new();
    for h in &halting {
        halt_set.insert(find_state(h, 0)?);
    }

    let mut transitions = HashMap::new();
    for (line, parts) in raw_transitions {
        // q a -> b M q'
        if parts.len() != 6 || parts[2] != "->" {
            return Err(TmError::Syntax {
                line,
                message: "expected `state symbol -> symbol move state`".into(),
            });
        }
        let state = find_state(&parts[0], line)?;
        let read = find_symbol(&parts[1], line)?;
        let write = find_symbol(&parts[3], line)?;
        let mv = match parts[4].as_str() {
            "L" => Move::Left,
            "R" => Move::Right,
            other => {
                return Err(TmError::Syntax { line, message: format!("move must be L or R, got {other}") })
            }
        };
        let next = find_state(&parts[5], line)?;
        if halt_set.contains(&state) {
            return Err(TmError::Syntax {
                line,
                message: format!("transition defined on halting state {}", parts[0]),
            });
        }
        if transitions.insert((state, read), (write, mv, next)).is_some() {
            return Err(TmError::DuplicateTransition {
                state: parts[0].clone(),
                symbol: parts[1].clone(),
                line,
            });
        }
    }

    let machine = TuringMachine { state_names, symbol_names, blank, start, halting: halt_set, transitions };

    if strict {
        for s in machine.states() {
            if machine.is_halting(s) {
                continue;
            }
            for a in machine.symbols() {
                if machine.transition(s, a).is_none() {
                    return Err(TmError::MissingTransition {
                        state: machine.state_name(s).to_string(),
                        symbol: machine.symbol_name(a).to_string(),
                    });
                }
            }
        }
    }
    Ok(machine)
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Move::Left => "L",
            Move::Right => "R",
        })
    }
}

/// Renders a machine in the file format accepted by [`parse_tm`].
pub fn render_tm(machine: &TuringMachine) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "states: {}\n",
        machine.state_names.join(" ")
    ));
    out.push_str(&format!("alphabet: {}\n", machine.symbol_names.join(" ")));
    out.push_str(&format!("blank: {}\n", machine.symbol_name(machine.blank)));
    out.push_str(&format!("start: {}\n", machine.state_name(machine.start)));
    let halts: Vec<&str> = machine.halting.iter().map(|s| machine.state_name(*s)).collect();
    out.push_str(&format!("halt: {}\n", halts.join(" ")));
    let mut keys: Vec<(StateId, TapeSym)> = machine.transitions.keys().copied().collect();
    keys.sort();
    for (s, a) in keys {
        let (w, m, n) = machine.transitions[&(s, a)];
        out.push_str(&format!(
            "{} {} -> {} {} {}\n",
            machine.state_name(s),
            machine.symbol_name(a),
            machine.symbol_name(w),
            m,
            machine.state_name(n)
        ));
    }
    out
}

/// Built-in machines used across the test and acceptance suites.
pub mod fixtures {
    use super::*;

    /// Single transition: write 1, move right, halt.
    pub fn one_transition() -> TuringMachine {
        parse_tm(
            "states: q0 qh\nalphabet: 0 1 _\nblank: _\nstart: q0\nhalt: qh\nq0 0 -> 1 R qh\n",
        )
        .unwrap()
    }

    /// Binary increment over a most-significant-bit-first tape: scan right to
    /// the end, then carry leftward.
    pub fn increment() -> TuringMachine {
        parse_tm(
            "states: scan carry qh\n\
             alphabet: 0 1 _\n\
             blank: _\n\
             start: scan\n\
             halt: qh\n\
             scan 0 -> 0 R scan\n\
             scan 1 -> 1 R scan\n\
             scan _ -> _ L carry\n\
             carry 1 -> 0 L carry\n\
             carry 0 -> 1 R qh\n\
             carry _ -> 1 R qh\n",
        )
        .unwrap()
    }

    /// Writes the parity of the number of 1s after the input.
    pub fn parity() -> TuringMachine {
        parse_tm(
            "states: even odd qh\n\
             alphabet: 0 1 _\n\
             blank: _\n\
             start: even\n\
             halt: qh\n\
             even 0 -> 0 R even\n\
             even 1 -> 1 R odd\n\
             even _ -> 0 R qh\n\
             odd 0 -> 0 R odd\n\
             odd 1 -> 1 R even\n\
             odd _ -> 1 R qh\n",
        )
        .unwrap()
    }

    /// Three-state two-symbol busy beaver (maximum-ones champion).
    pub fn busy_beaver3() -> TuringMachine {
        parse_tm(
            "states: A B C H\n\
             alphabet: 0 1\n\
             blank: 0\n\
             start: A\n\
             halt: H\n\
             A 0 -> 1 R B\n\
             A 1 -> 1 R H\n\
             B 0 -> 0 R C\n\
             B 1 -> 1 R B\n\
             C 0 -> 1 L C\n\
             C 1 -> 1 L A\n",
        )
        .unwrap()
    }

    pub fn all() -> Vec<(&'static str, TuringMachine)> {
        vec![
            ("one-transition", one_transition()),
            ("increment", increment()),
            ("parity", parity()),
            ("busy-beaver-3", busy_beaver3()),
        ]
    }
}
