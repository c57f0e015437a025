//! Compiles a Turing machine into a lag system (lag 2, deletion 1).
//!
//! The machine configuration is laid out as a circular queue that streams
//! past the two-symbol rule window: delete-front plus append-back makes the
//! whole string rotate, so rules see each ring cell once per rotation with
//! one-symbol lookahead. The tape sits on the ring in decreasing position
//! order with a seam symbol closing the circle between the leftmost and
//! rightmost written cells.
//!
//! Machine state rides the ring as a single stateful symbol:
//!
//! * A resting head fires when it reaches the front and re-emits the cell it
//!   sat on as a transit symbol carrying the next control state. The cell
//!   consumed directly before the transit (its ring predecessor, i.e. the
//!   tape cell one position to the right) grabs the state, which is exactly
//!   a right move.
//! * A left move cannot hand the state forward, so the head lifts its cell
//!   into a star marker and starts a rotation lap: the control state walks
//!   the ring with a one-cell buffer, sliding every cell one position
//!   rightward, until the lap returns to the star and drops the head there.
//!   The slide leaves the tape contents in the same relative order with a
//!   fresh blank at the left end, which decoding trims away.
//! * The seam owns the only two-output rules: crossing it while growing the
//!   tape inserts a fresh blank cell on the correct side.
//!
//! Halting needs no dedicated machinery: a head whose (state, cell) pair has
//! no transition simply has no rule, so the run stops with the checkpoint
//! string at the front.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::lag::{HaltReason, LagConfiguration, LagSystem, ProductionRule, StepOutcome};
use crate::symbol::{Alphabet, SymbolId, SymbolString};
use crate::tm::{Move, StateId, TapeSym, TmConfiguration, TuringMachine};

/// Cell payload on the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum CellContent {
    /// Ordinary tape cell.
    Plain(TapeSym),
    /// The leftmost written tape cell.
    Lm(TapeSym),
    /// Lifted old head cell during a rotation lap.
    Star,
}

/// Control state carried by the stateful ring symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Control {
    /// Head resting on a cell in machine state `q`.
    Exec(StateId),
    /// Rotation lap for a pending left move, buffering one cell content.
    Rot(StateId, TapeSym),
    /// Just crossed the seam inside a rotation lap; the next cell is the old
    /// leftmost and receives the fresh blank.
    RotFlushed(StateId),
    /// Edge left move: passing unchanged toward the seam to grow the tape.
    Skip(StateId),
}

/// One ring symbol of the compiled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum RingSymbol {
    Cell(CellContent),
    Seam,
    Head(CellContent, Control),
    SeamHead(Control),
    Transit(CellContent, Control),
    SeamTransit(Control),
}

/// What a stateful symbol emits when it reaches the front.
enum Firing {
    One(RingSymbol),
    Two(RingSymbol, RingSymbol),
    /// No rule: the run halts with this symbol at the front.
    Terminal,
}

fn content_of(t: CellContent) -> Option<TapeSym> {
    match t {
        CellContent::Plain(g) | CellContent::Lm(g) => Some(g),
        CellContent::Star => None,
    }
}

fn with_same_mark(t: CellContent, written: TapeSym) -> CellContent {
    match t {
        CellContent::Plain(_) => CellContent::Plain(written),
        CellContent::Lm(_) => CellContent::Lm(written),
        CellContent::Star => CellContent::Star,
    }
}

fn head_firing(machine: &TuringMachine, t: CellContent, p: Control) -> Firing {
    match p {
        Control::Exec(q) => {
            let Some(read) = content_of(t) else {
                return Firing::Terminal;
            };
            if machine.is_halting(q) {
                return Firing::Terminal;
            }
            let Some((write, mv, next)) = machine.transition(q, read) else {
                return Firing::Terminal;
            };
            match (mv, t) {
                (Move::Right, _) => {
                    Firing::One(RingSymbol::Transit(with_same_mark(t, write), Control::Exec(next)))
                }
                (Move::Left, CellContent::Plain(_)) => {
                    Firing::One(RingSymbol::Transit(CellContent::Star, Control::Rot(next, write)))
                }
                (Move::Left, CellContent::Lm(_)) => Firing::One(RingSymbol::Transit(
                    CellContent::Plain(write),
                    Control::Skip(next),
                )),
                (Move::Left, CellContent::Star) => Firing::Terminal,
            }
        }
        Control::Rot(q, buffer) => match t {
            CellContent::Plain(g) => Firing::One(RingSymbol::Transit(
                CellContent::Plain(buffer),
                Control::Rot(q, g),
            )),
            // Lap complete: drop the head onto the lifted cell with the
            // buffered content. This is the one stay-in-place emission.
            CellContent::Star => {
                Firing::One(RingSymbol::Head(CellContent::Plain(buffer), Control::Exec(q)))
            }
            CellContent::Lm(_) => Firing::Terminal,
        },
        Control::RotFlushed(q) => match t {
            CellContent::Lm(g) => Firing::One(RingSymbol::Transit(
                CellContent::Lm(machine.blank),
                Control::Rot(q, g),
            )),
            _ => Firing::Terminal,
        },
        Control::Skip(q) => match t {
            CellContent::Plain(g) => {
                Firing::One(RingSymbol::Transit(CellContent::Plain(g), Control::Skip(q)))
            }
            _ => Firing::Terminal,
        },
    }
}

fn seam_head_firing(machine: &TuringMachine, p: Control) -> Firing {
    match p {
        // Head moved right past the rightmost cell: grow the tape with a
        // fresh blank head cell directly after the seam.
        Control::Exec(q) => Firing::Two(
            RingSymbol::Seam,
            RingSymbol::Head(CellContent::Plain(machine.blank), Control::Exec(q)),
        ),
        // Rotation lap crossing the seam: flush the buffer into a fresh
        // rightmost cell and carry the lap over to the old leftmost.
        Control::Rot(q, buffer) => Firing::Two(
            RingSymbol::SeamTransit(Control::RotFlushed(q)),
            RingSymbol::Cell(CellContent::Plain(buffer)),
        ),
        // Edge left move: grow the tape with a fresh marked leftmost cell
        // carrying the head, placed directly before the seam.
        Control::Skip(q) => Firing::Two(
            RingSymbol::Head(CellContent::Lm(machine.blank), Control::Exec(q)),
            RingSymbol::Seam,
        ),
        Control::RotFlushed(_) => Firing::Terminal,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CompileError {
    #[error("machine has no states or symbols")]
    EmptyMachine,
    #[error("internal rule table conflict on {0:?}")]
    RuleConflict(String),
}

/// Emitted system statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CompiledStats {
    pub rule_count: usize,
    /// Alphabet size excluding the halt symbol, which exists only for
    /// codebooks and never appears in rules.
    pub symbol_count: usize,
    pub two_output_rule_count: usize,
}

/// A compiled lag system plus the configuration codecs tied to it.
#[derive(Debug, Clone)]
pub struct CompiledLag {
    pub system: LagSystem,
    pub machine: TuringMachine,
    pub stats: CompiledStats,
    seam: SymbolId,
    halt: SymbolId,
    forms: Vec<RingSymbol>,
    ids: HashMap<RingSymbol, SymbolId>,
}

fn display_content(machine: &TuringMachine, t: CellContent) -> String {
    match t {
        CellContent::Plain(g) => machine.symbol_name(g).to_string(),
        CellContent::Lm(g) => format!("{}'", machine.symbol_name(g)),
        CellContent::Star => "*".to_string(),
    }
}

fn display_control(machine: &TuringMachine, p: Control) -> String {
    match p {
        Control::Exec(q) => format!("x.{}", machine.state_name(q)),
        Control::Rot(q, v) => format!("r.{}.{}", machine.state_name(q), machine.symbol_name(v)),
        Control::RotFlushed(q) => format!("f.{}", machine.state_name(q)),
        Control::Skip(q) => format!("s.{}", machine.state_name(q)),
    }
}

fn display_form(machine: &TuringMachine, form: RingSymbol) -> String {
    match form {
        RingSymbol::Cell(t) => format!("({},cell,.)", display_content(machine, t)),
        RingSymbol::Seam => "(:,seam,.)".to_string(),
        RingSymbol::Head(t, p) => format!(
            "({},head,{})",
            display_content(machine, t),
            display_control(machine, p)
        ),
        RingSymbol::SeamHead(p) => format!("(:,head,{})", display_control(machine, p)),
        RingSymbol::Transit(t, p) => format!(
            "({},tr,{})",
            display_content(machine, t),
            display_control(machine, p)
        ),
        RingSymbol::SeamTransit(p) => format!("(:,tr,{})", display_control(machine, p)),
    }
}

/// Compiles `machine` into a lag system with configuration codecs.
pub fn compile(machine: &TuringMachine) -> Result<CompiledLag, CompileError> {
    if machine.state_count() == 0 || machine.symbol_count() == 0 {
        return Err(CompileError::EmptyMachine);
    }

    // Deterministic symbol universe.
    let mut contents: Vec<CellContent> = Vec::new();
    for g in machine.symbols() {
        contents.push(CellContent::Plain(g));
    }
    for g in machine.symbols() {
        contents.push(CellContent::Lm(g));
    }
    contents.push(CellContent::Star);

    let mut controls: Vec<Control> = Vec::new();
    for q in machine.states() {
        controls.push(Control::Exec(q));
    }
    for q in machine.states() {
        for v in machine.symbols() {
            controls.push(Control::Rot(q, v));
        }
    }
    for q in machine.states() {
        controls.push(Control::RotFlushed(q));
    }
    for q in machine.states() {
        controls.push(Control::Skip(q));
    }

    let mut forms: Vec<RingSymbol> = Vec::new();
    forms.extend(contents.iter().map(|t| RingSymbol::Cell(*t)));
    forms.push(RingSymbol::Seam);
    for t in &contents {
        for p in &controls {
            forms.push(RingSymbol::Head(*t, *p));
        }
    }
    for p in &controls {
        forms.push(RingSymbol::SeamHead(*p));
    }
    for t in &contents {
        for p in &controls {
            forms.push(RingSymbol::Transit(*t, *p));
        }
    }
    for p in &controls {
        forms.push(RingSymbol::SeamTransit(*p));
    }

    let mut labels: Vec<String> = forms.iter().map(|f| display_form(machine, *f)).collect();
    labels.push("h".to_string());
    let seam_index = contents.len();
    let mut alphabet = Alphabet::new(&labels, "h", Some("(:,seam,.)"))
        .map_err(|e| CompileError::RuleConflict(e.to_string()))?;
    alphabet.rebuild_index();

    let ids: HashMap<RingSymbol, SymbolId> = forms
        .iter()
        .enumerate()
        .map(|(i, f)| (*f, SymbolId(i as u32)))
        .collect();
    let halt = SymbolId(forms.len() as u32);
    let seam = SymbolId(seam_index as u32);

    let id_of = |f: RingSymbol| -> SymbolId { ids[&f] };
    let emit = |f: &Firing| -> Option<Vec<RingSymbol>> {
        match f {
            Firing::One(a) => Some(vec![*a]),
            Firing::Two(a, b) => Some(vec![*a, *b]),
            Firing::Terminal => None,
        }
    };

    let mut rules: BTreeMap<(SymbolId, SymbolId), ProductionRule> = BTreeMap::new();
    let mut two_output = 0usize;
    let add = |rules: &mut BTreeMap<(SymbolId, SymbolId), ProductionRule>,
                   two_output: &mut usize,
                   front: RingSymbol,
                   look: RingSymbol,
                   out: Vec<RingSymbol>|
     -> Result<(), CompileError> {
        let lhs = (id_of(front), id_of(look));
        let rhs: Vec<SymbolId> = out.iter().map(|f| id_of(*f)).collect();
        if rhs.len() == 2 {
            *two_output += 1;
        }
        let rule = ProductionRule::new(lhs, rhs);
        if let Some(prev) = rules.insert(lhs, rule.clone()) {
            if prev != rule {
                return Err(CompileError::RuleConflict(format!("{front:?} / {look:?}")));
            }
        }
        Ok(())
    };

    let cell_forms: Vec<RingSymbol> = contents.iter().map(|t| RingSymbol::Cell(*t)).collect();

    // Plain flow: cells and the seam pass themselves regardless of what
    // stateless or resting symbol they see next.
    for x in &cell_forms {
        for y in &cell_forms {
            add(&mut rules, &mut two_output, *x, *y, vec![*x])?;
        }
        add(&mut rules, &mut two_output, *x, RingSymbol::Seam, vec![*x])?;
        add(&mut rules, &mut two_output, RingSymbol::Seam, *x, vec![RingSymbol::Seam])?;
    }
    for t in &contents {
        for p in &controls {
            let head = RingSymbol::Head(*t, *p);
            for x in &cell_forms {
                add(&mut rules, &mut two_output, *x, head, vec![*x])?;
            }
            add(&mut rules, &mut two_output, RingSymbol::Seam, head, vec![RingSymbol::Seam])?;
        }
    }
    for p in &controls {
        let sh = RingSymbol::SeamHead(*p);
        for x in &cell_forms {
            add(&mut rules, &mut two_output, *x, sh, vec![*x])?;
        }
    }

    // Grabs: the symbol consumed with a transit as lookahead takes the state.
    for t in &contents {
        for p in &controls {
            let tr = RingSymbol::Transit(*t, *p);
            for x in &contents {
                add(
                    &mut rules,
                    &mut two_output,
                    RingSymbol::Cell(*x),
                    tr,
                    vec![RingSymbol::Head(*x, *p)],
                )?;
            }
            add(&mut rules, &mut two_output, RingSymbol::Seam, tr, vec![RingSymbol::SeamHead(*p)])?;
        }
    }
    for p in &controls {
        let str_ = RingSymbol::SeamTransit(*p);
        for x in &contents {
            add(
                &mut rules,
                &mut two_output,
                RingSymbol::Cell(*x),
                str_,
                vec![RingSymbol::Head(*x, *p)],
            )?;
        }
    }

    // Drops: a consumed transit settles into the cell (or seam) it carried.
    for t in &contents {
        for p in &controls {
            let tr = RingSymbol::Transit(*t, *p);
            let settled = vec![RingSymbol::Cell(*t)];
            for y in &cell_forms {
                add(&mut rules, &mut two_output, tr, *y, settled.clone())?;
            }
            add(&mut rules, &mut two_output, tr, RingSymbol::Seam, settled.clone())?;
            for p2 in &controls {
                add(&mut rules, &mut two_output, tr, RingSymbol::SeamHead(*p2), settled.clone())?;
            }
        }
    }
    for p in &controls {
        let str_ = RingSymbol::SeamTransit(*p);
        for y in &cell_forms {
            add(&mut rules, &mut two_output, str_, *y, vec![RingSymbol::Seam])?;
        }
    }

    // Firings: a stateful symbol at the front performs one machine micro-step.
    for t in &contents {
        for p in &controls {
            let head = RingSymbol::Head(*t, *p);
            if let Some(out) = emit(&head_firing(machine, *t, *p)) {
                for y in &cell_forms {
                    add(&mut rules, &mut two_output, head, *y, out.clone())?;
                }
                add(&mut rules, &mut two_output, head, RingSymbol::Seam, out.clone())?;
            }
        }
    }
    for p in &controls {
        let sh = RingSymbol::SeamHead(*p);
        if let Some(out) = emit(&seam_head_firing(machine, *p)) {
            for y in &cell_forms {
                add(&mut rules, &mut two_output, sh, *y, out.clone())?;
            }
        }
    }

    let rule_list: Vec<ProductionRule> = rules.values().cloned().collect();
    let two_output_rule_count = rule_list.iter().filter(|r| r.rhs.len() == 2).count();
    let stats = CompiledStats {
        rule_count: rule_list.len(),
        symbol_count: alphabet.len() - 1,
        two_output_rule_count,
    };
    let system = LagSystem::new(alphabet, 2, 1, rule_list)
        .map_err(|e| CompileError::RuleConflict(e.to_string()))?;

    Ok(CompiledLag { system, machine: machine.clone(), stats, seam, halt, forms, ids })
}

impl CompiledLag {
    pub fn seam(&self) -> SymbolId {
        self.seam
    }

    pub fn halt_symbol(&self) -> SymbolId {
        self.halt
    }

    fn form(&self, id: SymbolId) -> Option<RingSymbol> {
        self.forms.get(id.index()).copied()
    }

    /// Encodes a canonical configuration as its checkpoint string: head at
    /// the front, left cells nearest first with the last one marked leftmost,
    /// the seam, then right cells farthest first.
    pub fn encode_config(&self, config: &TmConfiguration) -> SymbolString {
        let mut out: Vec<SymbolId> = Vec::new();
        let head_content = if config.left.is_empty() {
            CellContent::Lm(config.head)
        } else {
            CellContent::Plain(config.head)
        };
        out.push(self.ids[&RingSymbol::Head(head_content, Control::Exec(config.state))]);
        for (i, g) in config.left.iter().enumerate() {
            let t = if i + 1 == config.left.len() {
                CellContent::Lm(*g)
            } else {
                CellContent::Plain(*g)
            };
            out.push(self.ids[&RingSymbol::Cell(t)]);
        }
        out.push(self.seam);
        for g in config.right.iter().rev() {
            out.push(self.ids[&RingSymbol::Cell(CellContent::Plain(*g))]);
        }
        SymbolString(out)
    }

    /// Decodes a checkpoint string back to the configuration it encodes.
    /// Returns `None` for anything that is not a checkpoint: mid-step
    /// strings, lap states, lifted cells, misplaced boundary marks.
    pub fn decode_config(&self, string: &[SymbolId]) -> Option<TmConfiguration> {
        let mut forms = Vec::with_capacity(string.len());
        for id in string {
            forms.push(self.form(*id)?);
        }
        let mut iter = forms.iter();
        let (head_content, state) = match iter.next()? {
            RingSymbol::Head(t, Control::Exec(q)) => (*t, *q),
            _ => return None,
        };
        let head = content_of(head_content)?;
        let mut left: Vec<TapeSym> = Vec::new();
        let mut right: Vec<TapeSym> = Vec::new();
        let mut seen_seam = false;
        let mut lm_count = usize::from(matches!(head_content, CellContent::Lm(_)));
        for f in iter {
            match (f, seen_seam) {
                (RingSymbol::Seam, false) => seen_seam = true,
                (RingSymbol::Seam, true) => return None,
                (RingSymbol::Cell(CellContent::Plain(g)), false) => left.push(*g),
                (RingSymbol::Cell(CellContent::Lm(g)), false) => {
                    left.push(*g);
                    lm_count += 1;
                }
                (RingSymbol::Cell(CellContent::Plain(g)), true) => right.push(*g),
                _ => return None,
            }
        }
        if !seen_seam || lm_count != 1 {
            return None;
        }
        // The boundary mark must sit on the last cell before the seam, or on
        // the head itself when no left cells exist.
        if matches!(head_content, CellContent::Lm(_)) && !left.is_empty() {
            return None;
        }
        right.reverse();
        Some(TmConfiguration::canonical(left, head, right, state, self.machine.blank))
    }

    /// Sound upper bound on the lag steps needed to advance one machine step
    /// from the checkpoint encoding of `config`. Left moves trigger a full
    /// rotation lap, so the bound is quadratic in the ring length.
    pub fn macro_bound(&self, config: &TmConfiguration) -> u64 {
        let n = self.encode_config(config).len() as u64;
        2 * (n + 6) * (n + 8)
    }

    /// Runs the compiled system from `from` until the next checkpoint string
    /// and returns it with the step cost, or the halt if the system stops.
    /// Intermediate strings are fed to `on_intermediate`.
    pub fn next_checkpoint(
        &self,
        from: &LagConfiguration,
        budget: u64,
        mut on_intermediate: impl FnMut(&LagConfiguration),
    ) -> Result<CheckpointOutcome, crate::lag::LagError> {
        let mut current = from.clone();
        for _ in 0..budget {
            match self.system.step(&current)? {
                StepOutcome::Next(next) => {
                    current = next;
                    let snapshot: Vec<SymbolId> = current.string.iter().copied().collect();
                    if self.decode_config(&snapshot).is_some() {
                        return Ok(CheckpointOutcome::Checkpoint(current));
                    }
                    on_intermediate(&current);
                }
                StepOutcome::Halted(reason) => {
                    return Ok(CheckpointOutcome::Halted(current, reason));
                }
            }
        }
        Ok(CheckpointOutcome::BudgetExhausted(current))
    }
}

/// Outcome of advancing to the next checkpoint.
#[derive(Debug, Clone)]
pub enum CheckpointOutcome {
    Checkpoint(LagConfiguration),
    Halted(LagConfiguration, HaltReason),
    BudgetExhausted(LagConfiguration),
}

/// Restricts `system` to the rules actually fired while running it from the
/// given seed strings. The result is a faithful subsystem on the traffic the
/// seeds generate, sized for experiments that want small rule sets.
pub fn reachable_subsystem(
    system: &LagSystem,
    seeds: &[SymbolString],
    budget: u64,
) -> Result<LagSystem, crate::lag::LagError> {
    let mut fired: HashSet<(SymbolId, SymbolId)> = HashSet::new();
    for seed in seeds {
        let mut config = LagConfiguration::initial(seed);
        for _ in 0..budget {
            if config.string.len() < 2 {
                break;
            }
            let lhs = (config.string[0], config.string[1]);
            match system.step(&config)? {
                StepOutcome::Next(next) => {
                    fired.insert(lhs);
                    config = next;
                }
                StepOutcome::Halted(_) => break,
            }
        }
    }
    let rules: Vec<ProductionRule> = system
        .rules()
        .filter(|r| fired.contains(&r.lhs))
        .cloned()
        .collect();
    LagSystem::new(system.alphabet.clone(), system.lag(), system.deletion(), rules)
}

/// Sidecar metadata emitted next to a compiled rule file.
pub fn sidecar_json(compiled: &CompiledLag) -> serde_json::Value {
    let alphabet: Vec<serde_json::Value> = compiled
        .system
        .alphabet
        .symbols()
        .map(|s| serde_json::json!({"id": s.id.0, "display": s.display}))
        .collect();
    serde_json::json!({
        "stats": compiled.stats,
        "alphabet": alphabet,
        "halt": compiled.halt_symbol().0,
        "end_marker": compiled.seam().0,
        "checkpoint_format_version": 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tm::{fixtures, TmStepOutcome};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn tape(machine: &TuringMachine, text: &str) -> Vec<TapeSym> {
        text.chars()
            .map(|c| machine.lookup_symbol(&c.to_string()).unwrap())
            .collect()
    }

    /// Drives one machine step through the compiled system and asserts the
    /// commutation square closes: encode, advance to the next checkpoint,
    /// decode, compare with the machine's own step. Returns the successor.
    fn check_one_macro(compiled: &CompiledLag, config: &TmConfiguration) -> Option<TmConfiguration> {
        let machine = &compiled.machine;
        let encoded = compiled.encode_config(config);
        assert_eq!(
            compiled.decode_config(&encoded.0).as_ref(),
            Some(config),
            "encode/decode round trip"
        );
        let bound = compiled.macro_bound(config);
        let start = LagConfiguration::initial(&encoded);
        let outcome = compiled
            .next_checkpoint(&start, bound, |_| {})
            .expect("lag execution error");
        match machine.step(config) {
            TmStepOutcome::Next(expected) => {
                let CheckpointOutcome::Checkpoint(at) = outcome else {
                    panic!("expected a checkpoint within {bound} steps, got {outcome:?}");
                };
                let snapshot: Vec<SymbolId> = at.string.iter().copied().collect();
                let decoded = compiled.decode_config(&snapshot).unwrap();
                assert_eq!(decoded, expected, "checkpoint decodes to the machine successor");
                Some(expected)
            }
            TmStepOutcome::Halted => {
                let CheckpointOutcome::Halted(at, reason) = outcome else {
                    panic!("machine halted but lag system kept producing checkpoints: {outcome:?}");
                };
                assert_eq!(reason, HaltReason::NoRuleMatch);
                let snapshot: Vec<SymbolId> = at.string.iter().copied().collect();
                assert_eq!(compiled.decode_config(&snapshot).as_ref(), Some(config));
                None
            }
        }
    }

    fn check_full_run(compiled: &CompiledLag, input: &[TapeSym], max_steps: usize) {
        let mut config = compiled.machine.initial_config(input);
        for _ in 0..max_steps {
            match check_one_macro(compiled, &config) {
                Some(next) => config = next,
                None => return,
            }
        }
        panic!("machine did not halt within {max_steps} steps");
    }

    #[test]
    fn one_transition_round_trip() {
        let compiled = compile(&fixtures::one_transition()).unwrap();
        let input = tape(&compiled.machine, "0");
        check_full_run(&compiled, &input, 10);
    }

    #[test]
    fn one_transition_emitted_rules_validate() {
        let compiled = compile(&fixtures::one_transition()).unwrap();
        assert!(compiled.system.validate().is_clean());
        assert_eq!(compiled.stats.rule_count, compiled.system.rule_count());
        assert!(compiled.stats.two_output_rule_count > 0);
        assert!(compiled.stats.two_output_rule_count < compiled.stats.rule_count / 10);
    }

    #[test]
    fn increment_full_runs() {
        let compiled = compile(&fixtures::increment()).unwrap();
        for text in ["0", "1", "011", "111", "1010"] {
            let input = tape(&compiled.machine, text);
            check_full_run(&compiled, &input, 200);
        }
    }

    #[test]
    fn parity_full_runs() {
        let compiled = compile(&fixtures::parity()).unwrap();
        for text in ["", "1", "1101", "0000"] {
            let input = tape(&compiled.machine, text);
            check_full_run(&compiled, &input, 200);
        }
    }

    #[test]
    fn busy_beaver_full_run_from_blank() {
        let compiled = compile(&fixtures::busy_beaver3()).unwrap();
        check_full_run(&compiled, &[], 40);
    }

    #[test]
    fn decode_rejects_empty_and_intermediates() {
        let compiled = compile(&fixtures::increment()).unwrap();
        assert_eq!(compiled.decode_config(&[]), None);
        let config = compiled.machine.initial_config(&tape(&compiled.machine, "011"));
        let encoded = compiled.encode_config(&config);
        let mut intermediates = Vec::new();
        let outcome = compiled
            .next_checkpoint(
                &LagConfiguration::initial(&encoded),
                compiled.macro_bound(&config),
                |c| intermediates.push(c.clone()),
            )
            .unwrap();
        assert!(matches!(outcome, CheckpointOutcome::Checkpoint(_)));
        assert!(!intermediates.is_empty());
        for mid in intermediates {
            let snapshot: Vec<SymbolId> = mid.string.iter().copied().collect();
            assert_eq!(compiled.decode_config(&snapshot), None, "false checkpoint");
        }
    }

    /// Collects reachable configurations by running the machine on random
    /// inputs and sampling its trace.
    fn random_reachable_configs(
        machine: &TuringMachine,
        rng: &mut StdRng,
        count: usize,
    ) -> Vec<TmConfiguration> {
        let symbols: Vec<TapeSym> = machine.symbols().filter(|s| *s != machine.blank).collect();
        let mut configs = Vec::new();
        while configs.len() < count {
            let len = rng.gen_range(0..6);
            let input: Vec<TapeSym> =
                (0..len).map(|_| symbols[rng.gen_range(0..symbols.len())]).collect();
            let trace = machine.run(&machine.initial_config(&input), 50);
            let pick = rng.gen_range(0..trace.configs.len());
            configs.push(trace.configs[pick].clone());
        }
        configs
    }

    #[test]
    fn soundness_on_random_reachable_configs() {
        let mut rng = StdRng::seed_from_u64(5);
        for (_, machine) in fixtures::all() {
            let compiled = compile(&machine).unwrap();
            for config in random_reachable_configs(&machine, &mut rng, 25) {
                check_one_macro(&compiled, &config);
            }
        }
    }

    #[test]
    fn reachable_subsystem_is_small_and_sufficient() {
        let compiled = compile(&fixtures::one_transition()).unwrap();
        let config = compiled.machine.initial_config(&tape(&compiled.machine, "0"));
        let seed = compiled.encode_config(&config);
        let reduced = reachable_subsystem(&compiled.system, &[seed.clone()], 10_000).unwrap();
        assert!(reduced.rule_count() < compiled.system.rule_count());
        // The reduced system still carries the seed run to the same halt.
        let full = compiled.system.run(&seed, 10_000).unwrap();
        let small = reduced.run(&seed, 10_000).unwrap();
        assert_eq!(full.configs.last(), small.configs.last());
        assert_eq!(full.halt, small.halt);
    }

    #[test]
    fn sidecar_reports_stats() {
        let compiled = compile(&fixtures::one_transition()).unwrap();
        let sidecar = sidecar_json(&compiled);
        assert_eq!(sidecar["stats"]["rule_count"], compiled.stats.rule_count);
        assert_eq!(sidecar["checkpoint_format_version"], 1);
    }
}
