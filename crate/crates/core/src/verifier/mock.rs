//! Table-driven verifier for tests and offline experiments.
//!
//! A verdict table maps (program id, specification hash) to a stored report
//! that is returned verbatim. Specifications not in the table are judged by
//! rules: every goal-producing annotation yields one WP-style goal, which
//! fails when its text is listed as failing (globally or for the program).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{anchor_failures, link_goals, weave_with_spans, GoalResult, GoalStatus, Verifier, VerifierError, VerifierReport};
use crate::acsl::{normalize_text, Anchor, ConstructKind, SpecificationSet};
use crate::dataset::Program;

/// Hex SHA-256 over the annotations sorted by (kind, anchor, text).
pub fn spec_hash(spec: &SpecificationSet) -> String {
    let mut hasher = Sha256::new();
    for (kind, anchor, text) in spec.keys() {
        hasher.update(format!("{kind:?}\t{anchor}\t{text}\n").as_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockVerdict {
    pub program_id: String,
    pub spec_hash: String,
    pub report: VerifierReport,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MockRules {
    pub failing_texts: BTreeSet<String>,
    pub timeout_texts: BTreeSet<String>,
    pub tool_error_texts: BTreeSet<String>,
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MockTable {
    /// Seconds reported for every call unless a program overrides it.
    pub wall_time: f64,
    pub verdicts: Vec<MockVerdict>,
    #[serde(flatten)]
    pub rules: MockRules,
    pub programs: BTreeMap<String, MockRules>,
}

impl Default for MockTable {
    fn default() -> Self {
        MockTable { wall_time: 1.0, verdicts: Vec::new(), rules: MockRules::default(), programs: BTreeMap::new() }
    }
}

impl MockTable {
    pub fn load(path: &Path) -> Result<Self, VerifierError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| VerifierError::Io { context: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|e| VerifierError::MockTable(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub struct MockVerifier {
    table: MockTable,
    verdicts: HashMap<(String, String), VerifierReport>,
    calls: AtomicUsize,
}

impl MockVerifier {
    pub fn new(mut table: MockTable) -> Self {
        let normalize = |rules: &mut MockRules| {
            for set in [&mut rules.failing_texts, &mut rules.timeout_texts, &mut rules.tool_error_texts] {
                *set = set.iter().map(|t| normalize_text(t)).collect();
            }
        };
        normalize(&mut table.rules);
        table.programs.values_mut().for_each(normalize);
        let verdicts = table
            .verdicts
            .iter()
            .map(|v| ((v.program_id.clone(), v.spec_hash.clone()), v.report.clone()))
            .collect();
        MockVerifier { table, verdicts, calls: AtomicUsize::new(0) }
    }

    /// Number of `verify` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn rule_matches(&self, program: &str, text: &str, pick: fn(&MockRules) -> &BTreeSet<String>) -> bool {
        pick(&self.table.rules).contains(text) || self.table.programs.get(program).is_some_and(|r| pick(r).contains(text))
    }
}

impl Verifier for MockVerifier {
    fn verify(&self, program: &Program, spec: &SpecificationSet) -> Result<VerifierReport, VerifierError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if let Some(report) = self.verdicts.get(&(program.id.clone(), spec_hash(spec))) {
            return Ok(report.clone());
        }
        let wall_time =
            self.table.programs.get(&program.id).and_then(|r| r.wall_time).unwrap_or(self.table.wall_time);
        if let Some(report) = anchor_failures(program, spec) {
            return Ok(report);
        }
        let (_, spans) = weave_with_spans(program, spec, &format!("{}.c", program.id))?;
        if spec.iter().any(|a| self.rule_matches(&program.id, &a.text, |r| &r.tool_error_texts)) {
            return Ok(VerifierReport::tool_error("mock: tool error rule matched".into(), wall_time));
        }

        let mut order: Vec<usize> = (0..spec.len()).filter(|&i| spec.annotations()[i].kind.generates_goals()).collect();
        order.sort_by_key(|&i| (spans[i].as_ref().map_or(u32::MAX, |s| s.start_line), i));
        let mut ordinals: BTreeMap<String, u32> = BTreeMap::new();
        let mut goals = Vec::new();
        for i in order {
            let a = &spec.annotations()[i];
            let status = if self.rule_matches(&program.id, &a.text, |r| &r.timeout_texts) {
                GoalStatus::Timeout
            } else if self.rule_matches(&program.id, &a.text, |r| &r.failing_texts) {
                GoalStatus::Unknown
            } else {
                GoalStatus::Proved
            };
            let mut goal = GoalResult::new(goal_name(a.kind, &a.anchor, a.declared_name(), &mut ordinals), status);
            goal.line = spans[i].as_ref().map(|s| s.start_line);
            goals.push(goal);
        }
        link_goals(&mut goals, spec, &spans);
        let raw = goals.iter().map(|g| format!("[wp] [{}] {}\n", g.status, g.goal_name)).collect();
        Ok(VerifierReport::from_goals(goals, raw, wall_time))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "adapter": "mock",
            "wall_time": self.table.wall_time,
            "verdicts": self.table.verdicts.len(),
        })
    }
}

/// WP-style goal name; the k-th goal of a category in the same scope gets a
/// `_k` suffix from k = 2 on.
fn goal_name(
    kind: ConstructKind,
    anchor: &Anchor,
    declared: Option<&str>,
    ordinals: &mut BTreeMap<String, u32>,
) -> String {
    if kind == ConstructKind::Lemma {
        return format!("typed_lemma_{}", declared.unwrap_or("anonymous"));
    }
    let scope = match anchor {
        Anchor::FunctionContract { function, behavior: Some(b) } => format!("{function}_{b}"),
        Anchor::FunctionContract { function, behavior: None } | Anchor::Loop { function, .. } => function.clone(),
        Anchor::Global => "global".to_string(),
    };
    let (category, phase) = match kind {
        ConstructKind::Requires => ("requires", ""),
        ConstructKind::Ensures => ("ensures", ""),
        ConstructKind::Assigns => ("assigns", ""),
        ConstructKind::LoopInvariant => ("loop_invariant", "_preserved"),
        ConstructKind::LoopVariant => ("loop_variant", "_decrease"),
        ConstructKind::LoopAssigns => ("loop_assigns", ""),
        _ => ("other", ""),
    };
    let k = ordinals.entry(format!("{scope}_{category}")).or_insert(0);
    *k += 1;
    let suffix = if *k > 1 { format!("_{k}") } else { String::new() };
    format!("typed_{scope}_{category}{suffix}{phase}")
}
