//! Proof-of-simulation verification.
//!
//! Two instruments: [`verify_rules`] enumerates every production rule against
//! a backend with a fresh per-rule context and records a verdict for each,
//! and [`cosimulate`] runs extended decoding and the lag engine in lockstep
//! to locate the first divergence, if any. A backend that passes rule
//! verification must co-simulate exactly; a counterexample is a toolkit bug
//! by definition.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::codebook::{check_codebook, codebook_to_json, Codebook, Token};
use crate::compile::{compile, CheckpointOutcome, CompiledLag};
use crate::decode::{
    extended_decode_step, simulate_lag, ExtendedStep, ModelBackend, OperationalString, SimEnd,
    SimulationConfig, ViolationKind,
};
use crate::lag::{HaltReason, LagConfiguration, LagSystem, ProductionRule};
use crate::symbol::{SymbolId, SymbolString};
use crate::tm::{TmConfiguration, TmTraceEnd, TuringMachine};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Why a rule verdict failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailureKind {
    WrongSymbol,
    NoHalt,
    EmptyProduction,
    ParseFailure,
    Transport,
}

/// Evidence for one production rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleVerdict {
    pub lhs: (SymbolId, SymbolId),
    pub rendered_context: String,
    /// Expected output labels: the rule outputs followed by the halt symbol.
    pub expected: Vec<String>,
    pub observed: Vec<String>,
    pub pass: bool,
    pub failure_kind: Option<FailureKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationSummary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

/// Complete rule-enumeration report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub system_hash: String,
    pub backend_identity: String,
    pub codebook_hash: String,
    pub system_prompt_hash: String,
    pub toolkit_version: String,
    pub verdicts: Vec<RuleVerdict>,
    pub summary: VerificationSummary,
    /// Wall-clock metadata, excluded from determinism comparisons.
    pub meta: ReportMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub generated_at: String,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.summary.failed == 0 && self.summary.total == self.summary.passed
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// Deterministic JSON body: everything except wall-clock metadata.
    pub fn deterministic_json(&self) -> serde_json::Value {
        let mut v = self.to_json();
        v.as_object_mut().unwrap().remove("meta");
        v
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}/{} rules pass against {}",
            self.summary.passed, self.summary.total, self.backend_identity
        )
    }
}

fn sha_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn system_hash(system: &LagSystem) -> String {
    sha_hex(crate::lag::render_rule_file(system).as_bytes())
}

pub fn codebook_hash(codebook: &Codebook) -> String {
    sha_hex(codebook_to_json(codebook).to_string().as_bytes())
}

pub fn prompt_hash(prompt: &[Token]) -> String {
    let joined = prompt.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ");
    sha_hex(joined.as_bytes())
}

fn now_utc() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

fn check_rule(
    backend: &dyn ModelBackend,
    config: &SimulationConfig,
    system: &LagSystem,
    rule: &ProductionRule,
) -> RuleVerdict {
    let alphabet = &system.alphabet;
    let label = |s: SymbolId| alphabet.display(s).to_string();
    let halt_label = label(config.codebook.halt());
    let expected: Vec<String> = rule
        .rhs
        .iter()
        .map(|s| label(*s))
        .chain(std::iter::once(halt_label.clone()))
        .collect();
    let mut op = OperationalString {
        symbols: vec![rule.lhs.0, rule.lhs.1],
        cursor: 0,
    };
    let rendered_context = format!(
        "{} {}",
        alphabet.display(rule.lhs.0),
        alphabet.display(rule.lhs.1)
    );
    match extended_decode_step(backend, config, &mut op) {
        Ok(ExtendedStep::Appended(observed)) => {
            let pass = observed == rule.rhs;
            let observed: Vec<String> = observed
                .iter()
                .map(|s| label(*s))
                .chain(std::iter::once(halt_label))
                .collect();
            RuleVerdict {
                lhs: rule.lhs,
                rendered_context,
                expected,
                observed,
                pass,
                failure_kind: if pass { None } else { Some(FailureKind::WrongSymbol) },
            }
        }
        Ok(ExtendedStep::Halted(_)) => RuleVerdict {
            lhs: rule.lhs,
            rendered_context,
            expected,
            observed: vec![],
            pass: false,
            failure_kind: Some(FailureKind::ParseFailure),
        },
        Err(violation) => {
            let kind = match violation.kind {
                ViolationKind::EmptyProduction => FailureKind::EmptyProduction,
                ViolationKind::NoHalt => FailureKind::NoHalt,
                ViolationKind::ParseFailure => FailureKind::ParseFailure,
                ViolationKind::Transport => FailureKind::Transport,
            };
            RuleVerdict {
                lhs: rule.lhs,
                rendered_context: violation.context,
                expected,
                observed: vec![],
                pass: false,
                failure_kind: Some(kind),
            }
        }
    }
}

/// Enumerates every rule against the backend with a fresh context per rule.
/// The report is complete even when failures occur; rule order is
/// lexicographic by left-hand symbol ids. `workers` above 1 fans out over a
/// thread pool when the backend declares itself share-safe.
pub fn verify_rules(
    backend: &dyn ModelBackend,
    config: &SimulationConfig,
    system: &LagSystem,
    workers: usize,
) -> Result<VerificationReport, String> {
    let codebook_report = check_codebook(&config.codebook, &system.alphabet);
    if !codebook_report.is_clean() {
        return Err(format!(
            "codebook fails validation: {:?}",
            codebook_report.violations
        ));
    }
    let rules: Vec<&ProductionRule> = system.rules().collect();
    let verdicts: Vec<RuleVerdict> = if workers > 1 && backend.share_safe() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| {
            rules
                .par_iter()
                .map(|rule| check_rule(backend, config, system, rule))
                .collect()
        })
    } else {
        rules
            .iter()
            .map(|rule| check_rule(backend, config, system, rule))
            .collect()
    };
    let passed = verdicts.iter().filter(|v| v.pass).count();
    let summary = VerificationSummary {
        total: verdicts.len(),
        passed,
        failed: verdicts.len() - passed,
    };
    Ok(VerificationReport {
        system_hash: system_hash(system),
        backend_identity: backend.identity(),
        codebook_hash: codebook_hash(&config.codebook),
        system_prompt_hash: prompt_hash(&config.system_prompt),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        verdicts,
        summary,
        meta: ReportMeta { generated_at: now_utc() },
    })
}

/// Lockstep comparison outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CosimReport {
    pub steps_compared: u64,
    pub agreed: bool,
    pub divergence: Option<Divergence>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub step: u64,
    pub lag_string: Vec<String>,
    pub simulated_string: Vec<String>,
}

/// Runs extended decoding and the lag engine in lockstep from `input` and
/// reports the first divergence or full agreement over `steps` steps.
pub fn cosimulate(
    backend: &dyn ModelBackend,
    config: &SimulationConfig,
    system: &LagSystem,
    input: &SymbolString,
    steps: u64,
) -> Result<CosimReport, String> {
    let mut sim_config = SimulationConfig {
        system_prompt: config.system_prompt.clone(),
        codebook: config.codebook.clone(),
        vector_decoder: config.vector_decoder.clone(),
        max_output_codewords_per_step: config.max_output_codewords_per_step,
        step_budget: steps,
    };
    sim_config.step_budget = steps;
    let sim = simulate_lag(backend, &sim_config, input);
    let lag = system.run(input, steps).map_err(|e| e.to_string())?;
    let render = |ids: &[SymbolId]| -> Vec<String> {
        ids.iter().map(|s| system.alphabet.display(*s).to_string()).collect()
    };

    let lag_steps = lag.configs.len() as u64 - 1;
    let sim_steps = sim.step_count() as u64;
    let common = lag_steps.min(sim_steps);
    for k in 0..=common {
        let lag_string: Vec<SymbolId> = lag.configs[k as usize].string.iter().copied().collect();
        let sim_string = sim.lag_string_at(k as usize).unwrap_or(&[]);
        if sim_string != lag_string.as_slice() {
            return Ok(CosimReport {
                steps_compared: k,
                agreed: false,
                divergence: Some(Divergence {
                    step: k,
                    lag_string: render(&lag_string),
                    simulated_string: render(sim_string),
                }),
            });
        }
    }
    // Same strings so far; the runs must also stop together. A backend that
    // cannot answer a ruleless prefix surfaces as a violation exactly where
    // the lag engine reports no matching rule.
    let ends_agree = match (&lag.halt, &sim.end) {
        _ if lag_steps != sim_steps => false,
        (HaltReason::StepBudget, SimEnd::Budget) => true,
        (HaltReason::StringTooShort, SimEnd::Halted(HaltReason::StringTooShort)) => true,
        (HaltReason::NoRuleMatch, SimEnd::Violation(_)) => true,
        (HaltReason::NoRuleMatch, SimEnd::Halted(HaltReason::NoRuleMatch)) => true,
        _ => false,
    };
    if !ends_agree {
        let k = common;
        let lag_string: Vec<SymbolId> = lag
            .configs
            .get(k as usize)
            .map(|c| c.string.iter().copied().collect())
            .unwrap_or_default();
        let sim_string = sim.lag_string_at(k as usize).unwrap_or(&[]).to_vec();
        return Ok(CosimReport {
            steps_compared: k,
            agreed: false,
            divergence: Some(Divergence {
                step: k,
                lag_string: render(&lag_string),
                simulated_string: render(&sim_string),
            }),
        });
    }
    Ok(CosimReport { steps_compared: common, agreed: true, divergence: None })
}

/// Everything a caller supplies to drive a model against a compiled system.
pub struct BackendBundle {
    pub backend: Arc<dyn ModelBackend>,
    pub config: SimulationConfig,
}

/// Stage at which an end-to-end check failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum EndToEndStage {
    Compile,
    CodebookCheck,
    VerifyRules,
    Cosimulate,
    MachineAgreement,
}

#[derive(Debug, Serialize)]
pub struct EndToEndReport {
    pub pass: bool,
    pub failed_stage: Option<EndToEndStage>,
    pub detail: String,
    pub machine_steps_checked: u64,
    pub halting_agreed: bool,
}

/// Compiles `machine`, builds a backend over the compiled system, verifies
/// every rule, co-simulates from the encoded initial configuration, decodes
/// the checkpoints back, and compares them against the machine's own trace.
pub fn end_to_end_tm_check(
    machine: &TuringMachine,
    make_bundle: &dyn Fn(&CompiledLag) -> Result<BackendBundle, String>,
    tm_input: &[crate::tm::TapeSym],
    tm_steps: u64,
) -> EndToEndReport {
    let fail = |stage: EndToEndStage, detail: String| EndToEndReport {
        pass: false,
        failed_stage: Some(stage),
        detail,
        machine_steps_checked: 0,
        halting_agreed: false,
    };
    let compiled = match compile(machine) {
        Ok(c) => c,
        Err(e) => return fail(EndToEndStage::Compile, e.to_string()),
    };
    let bundle = match make_bundle(&compiled) {
        Ok(b) => b,
        Err(e) => return fail(EndToEndStage::CodebookCheck, e),
    };
    let codebook_report = check_codebook(&bundle.config.codebook, &compiled.system.alphabet);
    if !codebook_report.is_clean() {
        return fail(
            EndToEndStage::CodebookCheck,
            format!("{:?}", codebook_report.violations),
        );
    }
    match verify_rules(bundle.backend.as_ref(), &bundle.config, &compiled.system, 1) {
        Ok(report) if report.passed() => {}
        Ok(report) => {
            return fail(
                EndToEndStage::VerifyRules,
                format!("{} rule failures", report.summary.failed),
            )
        }
        Err(e) => return fail(EndToEndStage::VerifyRules, e),
    }

    // Budget: machine trace plus per-step macro bounds.
    let initial = machine.initial_config(tm_input);
    let tm_trace = machine.run(&initial, tm_steps);
    let mut lag_budget: u64 = 16;
    for c in &tm_trace.configs {
        lag_budget = lag_budget.saturating_add(compiled.macro_bound(c));
    }

    let encoded = compiled.encode_config(&initial);
    match cosimulate(
        bundle.backend.as_ref(),
        &bundle.config,
        &compiled.system,
        &encoded,
        lag_budget,
    ) {
        Ok(report) if report.agreed => {}
        Ok(report) => {
            return fail(
                EndToEndStage::Cosimulate,
                format!("divergence at step {:?}", report.divergence.map(|d| d.step)),
            )
        }
        Err(e) => return fail(EndToEndStage::Cosimulate, e),
    }

    // Decode the checkpoint sequence out of the pure lag run and compare
    // against the machine's own trace.
    let mut decoded: Vec<TmConfiguration> = Vec::new();
    let mut current = LagConfiguration::initial(&encoded);
    decoded.push(match compiled.decode_config(&encoded.0) {
        Some(c) => c,
        None => return fail(EndToEndStage::MachineAgreement, "initial encoding undecodable".into()),
    });
    let mut lag_halted = false;
    while (decoded.len() as u64) <= tm_steps {
        let bound = match compiled.decode_config(
            &current.string.iter().copied().collect::<Vec<_>>(),
        ) {
            Some(c) => compiled.macro_bound(&c),
            None => break,
        };
        match compiled.next_checkpoint(&current, bound, |_| {}) {
            Ok(CheckpointOutcome::Checkpoint(next)) => {
                let snapshot: Vec<SymbolId> = next.string.iter().copied().collect();
                match compiled.decode_config(&snapshot) {
                    Some(c) => decoded.push(c),
                    None => {
                        return fail(
                            EndToEndStage::MachineAgreement,
                            "checkpoint failed to decode".into(),
                        )
                    }
                }
                current = next;
            }
            Ok(CheckpointOutcome::Halted(_, _)) => {
                lag_halted = true;
                break;
            }
            Ok(CheckpointOutcome::BudgetExhausted(_)) => {
                return fail(EndToEndStage::MachineAgreement, "macro bound exhausted".into())
            }
            Err(e) => return fail(EndToEndStage::MachineAgreement, e.to_string()),
        }
    }
    if decoded.len() > tm_trace.configs.len() {
        return fail(
            EndToEndStage::MachineAgreement,
            "lag run produced more checkpoints than machine steps".into(),
        );
    }
    for (k, (got, want)) in decoded.iter().zip(&tm_trace.configs).enumerate() {
        if got != want {
            return fail(
                EndToEndStage::MachineAgreement,
                format!("decoded checkpoint {k} mismatches machine trace"),
            );
        }
    }
    let tm_halted = tm_trace.end == TmTraceEnd::Halted;
    let halting_agreed = if tm_halted {
        lag_halted && decoded.len() == tm_trace.configs.len()
    } else {
        // Budgeted machine run: the lag side must still be alive too.
        !lag_halted && decoded.len() == tm_trace.configs.len()
    };
    EndToEndReport {
        pass: halting_agreed,
        failed_stage: if halting_agreed { None } else { Some(EndToEndStage::MachineAgreement) },
        detail: if halting_agreed {
            format!("{} checkpoints agree", decoded.len())
        } else {
            format!(
                "halting disagreement: machine {:?} after {} steps, lag halted={}, checkpoints={}",
                tm_trace.end,
                tm_trace.configs.len() - 1,
                lag_halted,
                decoded.len()
            )
        },
        machine_steps_checked: decoded.len() as u64 - 1,
        halting_agreed,
    }
}

/// Published statistics of the externally cited universal system.
pub const REFERENCE_RULE_COUNT: usize = 1857;
pub const REFERENCE_SYMBOL_COUNT: usize = 249;
pub const REFERENCE_TWO_OUTPUT_RULES: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceStatsReport {
    pub rule_count: usize,
    pub symbol_count: usize,
    pub two_output_rule_count: usize,
    pub matches_reference: bool,
}

/// Counts a loaded rule set and checks it against the published reference
/// numbers. Informational: a generic compiler reports its own counts and is
/// accepted on soundness, not on count matching.
pub fn reference_stats(system: &LagSystem) -> ReferenceStatsReport {
    let mut used: std::collections::HashSet<SymbolId> = std::collections::HashSet::new();
    let mut two = 0usize;
    for rule in system.rules() {
        used.insert(rule.lhs.0);
        used.insert(rule.lhs.1);
        for s in &rule.rhs {
            used.insert(*s);
        }
        if rule.rhs.len() == 2 {
            two += 1;
        }
    }
    let report = ReferenceStatsReport {
        rule_count: system.rule_count(),
        symbol_count: used.len(),
        two_output_rule_count: two,
        matches_reference: false,
    };
    ReferenceStatsReport {
        matches_reference: report.rule_count == REFERENCE_RULE_COUNT
            && report.symbol_count == REFERENCE_SYMBOL_COUNT
            && report.two_output_rule_count == REFERENCE_TWO_OUTPUT_RULES,
        ..report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::rule_table::RuleTableBackend;
    use crate::codebook::{build_pair_codebook, TokenAlphabet};
    use crate::tm::fixtures;

    fn pair_codebook_for(system: &LagSystem) -> Codebook {
        let need = (system.alphabet.len() as f64).sqrt().ceil() as usize;
        let labels: Vec<String> = (0..need.max(2)).map(|i| format!("t{i}")).collect();
        let tokens = TokenAlphabet::from_labels(&labels).unwrap();
        build_pair_codebook(&system.alphabet, &tokens).unwrap()
    }

    fn bundle_for(compiled: &CompiledLag) -> BackendBundle {
        let system = Arc::new(compiled.system.clone());
        let codebook = Arc::new(pair_codebook_for(&system));
        let backend = RuleTableBackend::new(system, codebook.clone(), 0);
        BackendBundle {
            backend: Arc::new(backend),
            config: SimulationConfig::new((*codebook).clone()),
        }
    }

    #[test]
    fn rule_table_passes_all_rules() {
        let compiled = compile(&fixtures::one_transition()).unwrap();
        let bundle = bundle_for(&compiled);
        let report =
            verify_rules(bundle.backend.as_ref(), &bundle.config, &compiled.system, 1).unwrap();
        assert!(report.passed(), "{}", report.summary_line());
        assert_eq!(report.summary.total, compiled.system.rule_count());
    }

    #[test]
    fn parallel_and_serial_reports_agree() {
        let compiled = compile(&fixtures::one_transition()).unwrap();
        let bundle = bundle_for(&compiled);
        let serial =
            verify_rules(bundle.backend.as_ref(), &bundle.config, &compiled.system, 1).unwrap();
        let parallel =
            verify_rules(bundle.backend.as_ref(), &bundle.config, &compiled.system, 4).unwrap();
        assert_eq!(serial.deterministic_json(), parallel.deterministic_json());
    }

    #[test]
    fn corrupted_rule_fails_exactly_once_and_diverges_at_first_use() {
        let compiled = compile(&fixtures::one_transition()).unwrap();
        let system = Arc::new(compiled.system.clone());
        let codebook = Arc::new(pair_codebook_for(&system));
        // Corrupt the first rule that actually fires from the initial encoding.
        let machine = &compiled.machine;
        let initial = machine.initial_config(&[machine.lookup_symbol("0").unwrap()]);
        let encoded = compiled.encode_config(&initial);
        let corrupt_lhs = (encoded.0[0], encoded.0[1]);
        let true_rhs = system.rule_for(corrupt_lhs).unwrap().rhs.clone();
        let wrong = vec![*encoded.0.last().unwrap()];
        assert_ne!(true_rhs, wrong);
        let backend = RuleTableBackend::new(system.clone(), codebook.clone(), 0)
            .with_corrupted_rule(corrupt_lhs, wrong);
        let config = SimulationConfig::new((*codebook).clone());
        let report = verify_rules(&backend, &config, &system, 1).unwrap();
        assert_eq!(report.summary.failed, 1);
        let failing: Vec<_> = report.verdicts.iter().filter(|v| !v.pass).collect();
        assert_eq!(failing[0].lhs, corrupt_lhs);
        assert_eq!(failing[0].failure_kind, Some(FailureKind::WrongSymbol));

        let cosim = cosimulate(&backend, &config, &system, &encoded, 500).unwrap();
        assert!(!cosim.agreed);
        // The corrupted rule fires on the very first step here.
        assert_eq!(cosim.divergence.unwrap().step, 1);
    }

    #[test]
    fn cosimulate_zero_steps_trivially_agrees() {
        let compiled = compile(&fixtures::one_transition()).unwrap();
        let bundle = bundle_for(&compiled);
        let machine = &compiled.machine;
        let initial = machine.initial_config(&[]);
        let encoded = compiled.encode_config(&initial);
        let report = cosimulate(
            bundle.backend.as_ref(),
            &bundle.config,
            &compiled.system,
            &encoded,
            0,
        )
        .unwrap();
        assert!(report.agreed);
        assert_eq!(report.steps_compared, 0);
    }

    #[test]
    fn end_to_end_fixtures_pass() {
        for (name, machine) in fixtures::all() {
            let input: Vec<crate::tm::TapeSym> = match name {
                "one-transition" => vec![machine.lookup_symbol("0").unwrap()],
                "increment" => "011"
                    .chars()
                    .map(|c| machine.lookup_symbol(&c.to_string()).unwrap())
                    .collect(),
                "parity" => "110"
                    .chars()
                    .map(|c| machine.lookup_symbol(&c.to_string()).unwrap())
                    .collect(),
                _ => vec![],
            };
            let report = end_to_end_tm_check(
                &machine,
                &|compiled| Ok(bundle_for(compiled)),
                &input,
                200,
            );
            assert!(report.pass, "{name}: {}", report.detail);
            assert!(report.halting_agreed, "{name}");
        }
    }

    #[test]
    fn reference_stats_mechanism() {
        let compiled = compile(&fixtures::one_transition()).unwrap();
        let report = reference_stats(&compiled.system);
        assert_eq!(report.rule_count, compiled.stats.rule_count);
        assert!(!report.matches_reference);
    }
}
