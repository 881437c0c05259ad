//! One guess-verify-refine run for a program under a configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acsl::{ConstructKind, SpecificationSet};
use crate::config::{build_generation_prompt, build_repair_prompt, check_compliance, Configuration, TemplateStore};
use crate::dataset::Program;
use crate::oracle::{propose, repair, Oracle, OracleError, OracleResponse};
use crate::verifier::{map_failures_to_annotations, tie_break, MappingError, Verifier, VerifierError, VerifierReport, VerifierStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    Deletion,
    Modification,
}

impl Paradigm {
    pub const ALL: [Paradigm; 2] = [Paradigm::Deletion, Paradigm::Modification];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Deletion => "deletion",
            Paradigm::Modification => "modification",
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "delete" | "deletion" => Ok(Paradigm::Deletion),
            "modify" | "modification" => Ok(Paradigm::Modification),
            other => Err(format!("unknown paradigm `{other}` (expected delete or modify)")),
        }
    }
}

/// How a run's elapsed time is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSource {
    /// Real wall-clock time from the first oracle request to the end of the loop.
    Wall,
    /// Sum of oracle latencies and verifier wall times as reported by them;
    /// reproducible with replayed oracles and mock verifiers.
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLimits {
    pub max_repair_iterations: u32,
    /// Seconds; once exceeded no further refinement round starts.
    pub wall_budget: f64,
    pub time_source: TimeSource,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits { max_repair_iterations: 5, wall_budget: 3600.0, time_source: TimeSource::Wall }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Verified,
    Exhausted,
    Errored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: String,
    pub message: String,
}

impl RunError {
    pub fn is_infrastructure(&self) -> bool {
        matches!(self.kind.as_str(), "ToolError" | "OracleUnavailable")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub program_id: String,
    pub config_name: String,
    pub paradigm: Paradigm,
    pub run_index: u32,
    pub persona: String,
    /// Whether the first proposal respected the configuration.
    pub compliant: bool,
    pub outcome: Outcome,
    pub error: Option<RunError>,
    pub tool_calls: u32,
    /// Seconds.
    pub elapsed: f64,
    pub iterations: u32,
    pub initial_size: usize,
    pub final_spec: SpecificationSet,
}

impl RunRecord {
    pub fn key(&self) -> (String, String, Paradigm, u32) {
        (self.program_id.clone(), self.config_name.clone(), self.paradigm, self.run_index)
    }
}

/// One entry per verifier call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallLog {
    pub attempt: u32,
    pub spec_size: usize,
    pub summary: String,
    pub failing_goals: Vec<String>,
    pub removed: Vec<String>,
    pub rejected: Vec<String>,
    pub wall_time: f64,
    pub elapsed: f64,
}

pub trait RunLog {
    fn record(&mut self, entry: &CallLog);
}

/// Discards log entries.
pub struct NoLog;

impl RunLog for NoLog {
    fn record(&mut self, _: &CallLog) {}
}

impl RunLog for Vec<CallLog> {
    fn record(&mut self, entry: &CallLog) {
        self.push(entry.clone());
    }
}

pub struct RunContext<'a> {
    pub program: &'a Program,
    pub config: &'a Configuration,
    pub paradigm: Paradigm,
    pub run_index: u32,
    pub persona: &'a str,
    pub oracle: &'a dyn Oracle,
    pub verifier: &'a dyn Verifier,
    pub templates: &'a TemplateStore,
    pub limits: RunLimits,
}

struct Clock {
    start: Instant,
    simulated: f64,
    source: TimeSource,
}

impl Clock {
    fn elapsed(&self) -> f64 {
        match self.source {
            TimeSource::Wall => self.start.elapsed().as_secs_f64(),
            TimeSource::Simulated => self.simulated,
        }
    }
}

fn oracle_error(e: &OracleError) -> RunError {
    let kind = match e {
        OracleError::OracleUnavailable { .. } => "OracleUnavailable",
        OracleError::EmptyCompletion { .. } => "EmptyCompletion",
        OracleError::FixtureMissing(_) => "FixtureMissing",
        OracleError::Config(_) => "OracleConfig",
    };
    RunError { kind: kind.into(), message: e.to_string() }
}

fn verifier_error(e: &VerifierError) -> RunError {
    let kind = match e {
        VerifierError::VerifierNotInstalled(_) => "VerifierNotInstalled",
        VerifierError::Weave(_) => "Weave",
        VerifierError::Io { .. } => "Io",
        VerifierError::MockTable(_) => "MockTable",
    };
    RunError { kind: kind.into(), message: e.to_string() }
}

/// Runs propose, verify and then refine/verify rounds until the
/// specification verifies, the paradigm gives up or something breaks.
/// Failures are recorded in the returned record, never raised.
pub fn run_once(ctx: &RunContext<'_>, log: &mut dyn RunLog) -> RunRecord {
    let mut clock = Clock { start: Instant::now(), simulated: 0.0, source: ctx.limits.time_source };
    let mut record = RunRecord {
        program_id: ctx.program.id.clone(),
        config_name: ctx.config.name.clone(),
        paradigm: ctx.paradigm,
        run_index: ctx.run_index,
        persona: ctx.persona.to_string(),
        compliant: false,
        outcome: Outcome::Errored,
        error: None,
        tool_calls: 0,
        elapsed: 0.0,
        iterations: 0,
        initial_size: 0,
        final_spec: SpecificationSet::empty(),
    };
    let finish = |mut record: RunRecord, clock: &Clock, outcome: Outcome, error: Option<RunError>| {
        record.outcome = outcome;
        record.error = error;
        record.elapsed = clock.elapsed();
        record
    };

    let prompt = match build_generation_prompt(ctx.program, ctx.config, ctx.templates) {
        Ok(p) => p,
        Err(e) => {
            let err = RunError { kind: "MissingTemplate".into(), message: e.to_string() };
            return finish(record, &clock, Outcome::Errored, Some(err));
        }
    };
    let response = match propose(ctx.oracle, &ctx.program.id, &ctx.config.name, ctx.run_index, prompt) {
        Ok(r) => r,
        Err(e) => return finish(record, &clock, Outcome::Errored, Some(oracle_error(&e))),
    };
    clock.simulated += response.latency;
    record.compliant = check_compliance(&response.extracted, ctx.config).compliant;
    record.initial_size = response.extracted.len();
    let mut rejected = response.rejected;
    let mut spec = response.extracted;

    loop {
        record.final_spec = spec.clone();
        let verdict = ctx.verifier.verify(ctx.program, &spec);
        record.tool_calls += 1;
        let report = match verdict {
            Ok(r) => r,
            Err(e) => return finish(record, &clock, Outcome::Errored, Some(verifier_error(&e))),
        };
        clock.simulated += report.wall_time;
        let mut entry = CallLog {
            attempt: record.iterations,
            spec_size: spec.len(),
            summary: report.summary(),
            failing_goals: report.failing_goals().map(|g| g.goal_name.clone()).collect(),
            removed: Vec::new(),
            rejected: std::mem::take(&mut rejected),
            wall_time: report.wall_time,
            elapsed: clock.elapsed(),
        };

        match report.status {
            VerifierStatus::Verified => {
                log.record(&entry);
                return finish(record, &clock, Outcome::Verified, None);
            }
            VerifierStatus::ToolError => {
                log.record(&entry);
                let err = RunError { kind: "ToolError".into(), message: report.raw_output.clone() };
                return finish(record, &clock, Outcome::Errored, Some(err));
            }
            VerifierStatus::Failed | VerifierStatus::Timeout => {}
        }
        if clock.elapsed() >= ctx.limits.wall_budget {
            log.record(&entry);
            return finish(record, &clock, Outcome::Exhausted, None);
        }

        match ctx.paradigm {
            Paradigm::Deletion => {
                let removed = refine_delete(&spec, &report);
                entry.removed = removed.iter().filter_map(|&i| spec.get(i)).map(|a| a.text.clone()).collect();
                log.record(&entry);
                spec = spec.without(&removed);
                record.iterations += 1;
                if spec.is_empty() {
                    record.final_spec = spec;
                    return finish(record, &clock, Outcome::Exhausted, None);
                }
            }
            Paradigm::Modification => {
                log.record(&entry);
                if record.iterations >= ctx.limits.max_repair_iterations {
                    return finish(record, &clock, Outcome::Exhausted, None);
                }
                record.iterations += 1;
                match refine_modify(ctx, &spec, &report, record.iterations) {
                    Ok(r) => {
                        clock.simulated += r.latency;
                        rejected = r.rejected;
                        spec = r.extracted;
                    }
                    Err(err) => return finish(record, &clock, Outcome::Errored, Some(err)),
                }
            }
        }
    }
}

/// Indices of the annotations the deletion paradigm removes for `report`:
/// the annotations blamed for failing goals (or the tie-break choice when
/// none can be blamed) plus everything depending on them.
pub fn refine_delete(spec: &SpecificationSet, report: &VerifierReport) -> BTreeSet<usize> {
    let blamed = match map_failures_to_annotations(report, spec) {
        Ok(set) => set,
        Err(MappingError::UnmappableFailure { mapped, unmapped }) => {
            tracing::debug!(?unmapped, "failing goals without an annotation");
            if mapped.is_empty() {
                tie_break(report, spec).into_iter().collect()
            } else {
                mapped
            }
        }
        Err(MappingError::NotFailed) => BTreeSet::new(),
    };
    with_dependents(spec, blamed)
}

/// Adds annotations that would be left dangling by removing `removed`:
/// uses of a removed predicate or logic function, and the clauses and
/// completeness statements of a removed behavior.
pub fn with_dependents(spec: &SpecificationSet, mut removed: BTreeSet<usize>) -> BTreeSet<usize> {
    loop {
        let names: Vec<(ConstructKind, String)> = removed
            .iter()
            .filter_map(|&i| spec.get(i))
            .filter(|a| matches!(a.kind, ConstructKind::Predicate | ConstructKind::Logic | ConstructKind::Behavior))
            .filter_map(|a| a.declared_name().map(|n| (a.kind, n.to_string())))
            .collect();
        let before = removed.len();
        for (i, a) in spec.iter().enumerate() {
            if removed.contains(&i) {
                continue;
            }
            let depends = names.iter().any(|(kind, name)| match kind {
                ConstructKind::Behavior => {
                    matches!(&a.anchor, crate::acsl::Anchor::FunctionContract { behavior: Some(b), .. } if b == name)
                        || (a.kind == ConstructKind::Behavior && a.declared_name().is_none() && a.mentions(name))
                }
                _ => a.mentions(name),
            });
            if depends {
                removed.insert(i);
            }
        }
        if removed.len() == before {
            return removed;
        }
    }
}

/// Asks the oracle for a replacement specification.
pub fn refine_modify(
    ctx: &RunContext<'_>,
    spec: &SpecificationSet,
    report: &VerifierReport,
    attempt_index: u32,
) -> Result<OracleResponse, RunError> {
    let prompt = build_repair_prompt(ctx.program, ctx.config, spec, report, ctx.templates)
        .map_err(|e| RunError { kind: "MissingTemplate".into(), message: e.to_string() })?;
    repair(ctx.oracle, &ctx.program.id, &ctx.config.name, ctx.run_index, attempt_index, prompt)
        .map_err(|e| oracle_error(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acsl::{Anchor, Annotation};
    use crate::config::canonical_config;
    use crate::oracle::{Completion, OracleRequest};
    use crate::verifier::{MockRules, MockTable, MockVerifier};
    use std::collections::BTreeMap;
    use ConstructKind as K;

    /// Serves scripted completions keyed by attempt index.
    struct Scripted(BTreeMap<u32, String>);

    impl Oracle for Scripted {
        fn complete(&self, request: &OracleRequest) -> Result<Completion, OracleError> {
            self.0
                .get(&request.attempt_index)
                .or_else(|| self.0.values().last())
                .map(|t| Completion { text: t.clone(), reported_latency: Some(0.5) })
                .ok_or_else(|| OracleError::FixtureMissing(request.attempt_index.to_string()))
        }

        fn describe(&self) -> serde_json::Value {
            serde_json::Value::Null
        }
    }

    fn program() -> Program {
        Program {
            id: "sum".into(),
            source: "int sum(int n) {\n  int s = 0;\n  for (int i = 0; i < n; i++) s += i;\n  return s;\n}\n".into(),
            target_function: "sum".into(),
            category: "loops".into(),
        }
    }

    const FOUR: &str = "/*@ requires n >= 0;\n    ensures \\result >= 0;\n    ensures \\result == n;\n    assigns \\nothing; */\nint sum(int n) {\n  int s = 0;\n  for (int i = 0; i < n; i++) s += i;\n  return s;\n}\n";

    fn run(paradigm: Paradigm, oracle: &Scripted, verifier: &MockVerifier, max: u32) -> RunRecord {
        let templates = TemplateStore::builtin();
        let config = canonical_config("CB").unwrap();
        let program = program();
        let ctx = RunContext {
            program: &program,
            config: &config,
            paradigm,
            run_index: 1,
            persona: "scripted",
            oracle,
            verifier,
            templates: &templates,
            limits: RunLimits { max_repair_iterations: max, time_source: TimeSource::Simulated, ..Default::default() },
        };
        run_once(&ctx, &mut NoLog)
    }

    fn failing(texts: &[&str]) -> MockVerifier {
        MockVerifier::new(MockTable {
            rules: MockRules { failing_texts: texts.iter().map(|t| t.to_string()).collect(), ..Default::default() },
            ..Default::default()
        })
    }

    #[test]
    fn immediate_success_is_identical_across_paradigms() {
        let oracle = Scripted([(0, FOUR.to_string())].into());
        let d = run(Paradigm::Deletion, &oracle, &failing(&[]), 5);
        let m = run(Paradigm::Modification, &oracle, &failing(&[]), 5);
        assert_eq!((d.outcome, d.tool_calls, d.iterations), (Outcome::Verified, 1, 0));
        assert!(d.compliant);
        assert_eq!(d.elapsed, 1.5);
        assert_eq!(RunRecord { paradigm: Paradigm::Modification, ..d }, m);
    }

    #[test]
    fn one_deletion_step() {
        let oracle = Scripted([(0, FOUR.to_string())].into());
        let r = run(Paradigm::Deletion, &oracle, &failing(&["ensures \\result == n;"]), 5);
        assert_eq!((r.outcome, r.tool_calls, r.iterations), (Outcome::Verified, 2, 1));
        assert_eq!(r.final_spec.len(), 3);
        assert!(r.final_spec.iter().all(|a| a.text != "ensures \\result == n;"));
    }

    #[test]
    fn deleting_everything_exhausts() {
        let oracle = Scripted([(0, FOUR.to_string())].into());
        let all = ["requires n >= 0;", "ensures \\result >= 0;", "ensures \\result == n;", "assigns \\nothing;"];
        let r = run(Paradigm::Deletion, &oracle, &failing(&all), 5);
        assert_eq!((r.outcome, r.tool_calls), (Outcome::Exhausted, 1));
        assert!(r.final_spec.is_empty());
    }

    #[test]
    fn modification_budget() {
        let oracle = Scripted([(0, FOUR.to_string())].into());
        let r = run(Paradigm::Modification, &oracle, &failing(&["ensures \\result == n;"]), 5);
        assert_eq!((r.outcome, r.tool_calls, r.iterations), (Outcome::Exhausted, 6, 5));
    }

    #[test]
    fn modification_repairs() {
        let fixed = FOUR.replace("\\result == n", "\\result <= n * n");
        let oracle = Scripted([(0, FOUR.to_string()), (1, fixed)].into());
        let r = run(Paradigm::Modification, &oracle, &failing(&["ensures \\result == n;"]), 5);
        assert_eq!((r.outcome, r.tool_calls, r.iterations), (Outcome::Verified, 2, 1));
        assert_eq!(r.elapsed, 0.5 + 1.0 + 0.5 + 1.0);
    }

    #[test]
    fn empty_repair_is_errored() {
        let oracle = Scripted([(0, FOUR.to_string()), (1, "sorry".to_string())].into());
        let r = run(Paradigm::Modification, &oracle, &failing(&["ensures \\result == n;"]), 5);
        assert_eq!(r.outcome, Outcome::Errored);
        assert_eq!(r.error.unwrap().kind, "EmptyCompletion");
        assert_eq!(r.tool_calls, 1);
    }

    #[test]
    fn tool_error_is_errored_and_counted() {
        let oracle = Scripted([(0, FOUR.to_string())].into());
        let verifier = MockVerifier::new(MockTable {
            rules: MockRules { tool_error_texts: ["assigns \\nothing;".into()].into(), ..Default::default() },
            ..Default::default()
        });
        let r = run(Paradigm::Deletion, &oracle, &verifier, 5);
        assert_eq!((r.outcome, r.tool_calls), (Outcome::Errored, 1));
        assert!(r.error.unwrap().is_infrastructure());
    }

    #[test]
    fn dependents_follow_removed_declarations() {
        let spec = SpecificationSet::new(vec![
            Annotation::new(K::Predicate, "predicate ok(integer x) = x >= 0;", Anchor::Global),
            Annotation::new(K::Lemma, "lemma l: \\forall integer x; x > 0 ==> ok(x);", Anchor::Global),
            Annotation::new(K::LoopInvariant, "loop invariant ok(i);", Anchor::loop_at("sum", 1)),
            Annotation::new(K::LoopInvariant, "loop invariant i <= n;", Anchor::loop_at("sum", 1)),
            Annotation::new(K::Behavior, "behavior pos: assumes n > 0;", Anchor::contract("sum")),
            Annotation::new(
                K::Ensures,
                "ensures \\result >= 0;",
                Anchor::FunctionContract { function: "sum".into(), behavior: Some("pos".into()) },
            ),
            Annotation::new(K::Behavior, "complete behaviors pos;", Anchor::contract("sum")),
        ]);
        assert_eq!(with_dependents(&spec, [0].into()), [0, 1, 2].into());
        assert_eq!(with_dependents(&spec, [4].into()), [4, 5, 6].into());
    }

    #[test]
    fn lemma_and_dependent_invariant_removed_together() {
        let text = "/*@ lemma bad: \\false; */\n/*@ ensures \\result >= 0; */\nint sum(int n) {\n  int s = 0;\n  /*@ loop invariant s >= 0; loop invariant 0 <= i; */\n  for (int i = 0; i < n; i++) s += i;\n  return s;\n}\n";
        let oracle = Scripted([(0, text.to_string())].into());
        let r = run(Paradigm::Deletion, &oracle, &failing(&["lemma bad: \\false;", "loop invariant s >= 0;"]), 5);
        assert_eq!((r.outcome, r.tool_calls), (Outcome::Verified, 2));
        assert_eq!(r.final_spec.len(), 2);
    }
}
