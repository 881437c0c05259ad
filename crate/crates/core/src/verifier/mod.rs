//! Running a deductive verifier on a program woven with a specification and
//! tracing its proof goals back to annotations.

mod framac;
mod mock;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acsl::{parse_annotations_in, weave, AcslError, Anchor, ConstructKind, SourceSpan, SpecificationSet};
use crate::dataset::Program;

pub use framac::{parse_framac_output, FramaC, FramaCSettings};
pub use mock::{spec_hash, MockRules, MockTable, MockVerdict, MockVerifier};

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("verifier executable `{0}` not found")]
    VerifierNotInstalled(String),
    #[error("cannot weave specification: {0}")]
    Weave(#[from] AcslError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("mock verdict table: {0}")]
    MockTable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerifierStatus {
    Verified,
    Failed,
    ToolError,
    Timeout,
}

impl fmt::Display for VerifierStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GoalStatus {
    Proved,
    Unknown,
    Timeout,
}

impl fmt::Display for GoalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalResult {
    pub goal_name: String,
    pub status: GoalStatus,
    /// Line in the woven file the goal originates from, when known.
    #[serde(default)]
    pub line: Option<u32>,
    /// Index into the verified specification set.
    #[serde(default)]
    pub source_annotation: Option<usize>,
}

impl GoalResult {
    pub fn new(name: impl Into<String>, status: GoalStatus) -> Self {
        GoalResult { goal_name: name.into(), status, line: None, source_annotation: None }
    }

    pub fn at_line(mut self, line: u32) -> Self {
        self.line = Some(line);
        self
    }

    pub fn with_annotation(mut self, index: usize) -> Self {
        self.source_annotation = Some(index);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub status: VerifierStatus,
    pub goals: Vec<GoalResult>,
    #[serde(default)]
    pub raw_output: String,
    /// Seconds spent in the verifier.
    #[serde(default)]
    pub wall_time: f64,
}

/// Name of the goal reported when a run produced no proof obligation at all.
pub const NO_GOALS: &str = "no_goals";

impl VerifierReport {
    /// Report whose status follows from its goals: verified when there is at
    /// least one goal and all are proved. An empty goal list becomes a
    /// failure carrying a single synthetic unknown goal.
    pub fn from_goals(mut goals: Vec<GoalResult>, raw_output: String, wall_time: f64) -> Self {
        if goals.is_empty() {
            goals.push(GoalResult::new(NO_GOALS, GoalStatus::Unknown));
        }
        let status = if goals.iter().all(|g| g.status == GoalStatus::Proved) {
            VerifierStatus::Verified
        } else {
            VerifierStatus::Failed
        };
        VerifierReport { status, goals, raw_output, wall_time }
    }

    pub fn tool_error(raw_output: String, wall_time: f64) -> Self {
        VerifierReport { status: VerifierStatus::ToolError, goals: Vec::new(), raw_output, wall_time }
    }

    pub fn failing_goals(&self) -> impl Iterator<Item = &GoalResult> {
        self.goals.iter().filter(|g| g.status != GoalStatus::Proved)
    }

    /// One-line summary such as `Failed 3/5 proved`.
    pub fn summary(&self) -> String {
        let proved = self.goals.iter().filter(|g| g.status == GoalStatus::Proved).count();
        format!("{} {proved}/{} proved", self.status, self.goals.len())
    }
}

/// A verifier for woven programs.
///
/// Implementations must be safe to call from several threads at once.
pub trait Verifier: Send + Sync {
    fn verify(&self, program: &Program, spec: &SpecificationSet) -> Result<VerifierReport, VerifierError>;

    /// Settings worth recording next to experiment results.
    fn describe(&self) -> serde_json::Value;
}

/// Weaves `spec` into the program and locates every annotation in the
/// woven text. `spans[i]` belongs to `spec[i]`.
pub fn weave_with_spans(
    program: &Program,
    spec: &SpecificationSet,
    file: &str,
) -> Result<(String, Vec<Option<SourceSpan>>), AcslError> {
    let woven = weave(&program.source, spec)?;
    let parsed = parse_annotations_in(file, &woven)?;
    let spans = spec
        .iter()
        .map(|a| parsed.position(&a.key()).and_then(|i| parsed.get(i)).map(|p| p.span.clone()))
        .collect();
    Ok((woven, spans))
}

/// Report blaming every annotation whose anchor does not exist in the
/// program, or `None` when all of them can be placed. Such specifications
/// never reach the external tool.
pub fn anchor_failures(program: &Program, spec: &SpecificationSet) -> Option<VerifierReport> {
    let goals: Vec<GoalResult> = spec
        .iter()
        .enumerate()
        .filter(|(_, a)| {
            let single = SpecificationSet::new(vec![(*a).clone()]);
            matches!(weave(&program.source, &single), Err(AcslError::AnchorNotFound { .. }))
        })
        .map(|(i, _)| GoalResult::new(format!("anchor_not_found_{i}"), GoalStatus::Unknown).with_annotation(i))
        .collect();
    if goals.is_empty() {
        return None;
    }
    let raw = goals.iter().map(|g| format!("{}\n", g.goal_name)).collect();
    Some(VerifierReport::from_goals(goals, raw, 0.0))
}

/// Fills in `source_annotation` for every goal that can be traced back to
/// an annotation, trying in order: names embedded in the goal name, the
/// woven source line, and the goal category.
pub fn link_goals(goals: &mut [GoalResult], spec: &SpecificationSet, spans: &[Option<SourceSpan>]) {
    for goal in goals.iter_mut() {
        if goal.source_annotation.is_some() {
            continue;
        }
        goal.source_annotation = link_by_name(&goal.goal_name, spec)
            .or_else(|| goal.line.and_then(|l| link_by_line(l, spans)))
            .or_else(|| link_by_category(&goal.goal_name, spec, spans));
    }
}

fn link_by_name(goal: &str, spec: &SpecificationSet) -> Option<usize> {
    let name = goal.split("lemma_").nth(1)?;
    spec.iter().position(|a| a.kind == ConstructKind::Lemma && a.declared_name() == Some(name))
}

fn link_by_line(line: u32, spans: &[Option<SourceSpan>]) -> Option<usize> {
    spans
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.as_ref().filter(|s| s.contains_line(line)).map(|s| (s.end_line - s.start_line, i)))
        .min()
        .map(|(_, i)| i)
}

/// Goal categories as they appear in goal names. The category ending last
/// in the name wins, and among those the longest, so that `loop_assigns`
/// beats `assigns`.
const CATEGORIES: [(&str, ConstructKind); 12] = [
    ("loop_invariant", ConstructKind::LoopInvariant),
    ("loop_variant", ConstructKind::LoopVariant),
    ("loop_assigns", ConstructKind::LoopAssigns),
    ("loop_term", ConstructKind::LoopVariant),
    ("call_requires", ConstructKind::Requires),
    ("requires", ConstructKind::Requires),
    ("ensures", ConstructKind::Ensures),
    ("assigns", ConstructKind::Assigns),
    ("complete", ConstructKind::Behavior),
    ("disjoint", ConstructKind::Behavior),
    ("post", ConstructKind::Ensures),
    ("pre", ConstructKind::Requires),
];

/// Parses names shaped like `typed_<function>[_<behavior>]_<category>[_<k>][_<phase>]`
/// and picks the k-th annotation (1 when absent) of the matching kind and
/// anchor, in woven order.
fn link_by_category(goal: &str, spec: &SpecificationSet, spans: &[Option<SourceSpan>]) -> Option<usize> {
    let body = goal.strip_prefix("typed_")?;
    let body = body.strip_prefix("ref_").unwrap_or(body);
    let (at, category, kind) = CATEGORIES
        .iter()
        .filter_map(|(c, k)| find_segment(body, c).map(|at| (at, *c, *k)))
        .max_by_key(|(at, c, _)| (at + c.len(), c.len()))?;
    let prefix = body[..at].trim_end_matches('_');
    let suffix = &body[at + category.len()..];
    let ordinal: usize = suffix
        .split('_')
        .find(|s| !s.is_empty())
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);

    let mut candidates: Vec<(u32, usize)> = spec
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind == kind)
        .filter(|(_, a)| match &a.anchor {
            Anchor::FunctionContract { function, behavior: Some(b) } => prefix == format!("{function}_{b}"),
            Anchor::FunctionContract { function, behavior: None } | Anchor::Loop { function, .. } => {
                prefix == function
            }
            Anchor::Global => false,
        })
        .map(|(i, _)| (spans.get(i).and_then(|s| s.as_ref()).map_or(u32::MAX, |s| s.start_line), i))
        .collect();
    candidates.sort();
    candidates.get(ordinal.checked_sub(1)?).map(|(_, i)| *i)
}

fn find_segment(body: &str, segment: &str) -> Option<usize> {
    body.match_indices(segment).map(|(at, _)| at).filter(|&at| {
        let before_ok = at == 0 || body.as_bytes()[at - 1] == b'_';
        let end = at + segment.len();
        let after_ok = end == body.len() || body.as_bytes()[end] == b'_';
        before_ok && after_ok
    })
    .last()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("the report is not a failure")]
    NotFailed,
    #[error("{} failing goal(s) match no annotation: {}", unmapped.len(), unmapped.join(", "))]
    UnmappableFailure { mapped: BTreeSet<usize>, unmapped: Vec<String> },
}

/// Indices of the annotations blamed for the report's unproved goals.
///
/// Timeouts are treated like failures. When some failing goals cannot be
/// traced, the annotations that could be are returned inside the error.
pub fn map_failures_to_annotations(
    report: &VerifierReport,
    spec: &SpecificationSet,
) -> Result<BTreeSet<usize>, MappingError> {
    if !matches!(report.status, VerifierStatus::Failed | VerifierStatus::Timeout) {
        return Err(MappingError::NotFailed);
    }
    let mut mapped = BTreeSet::new();
    let mut unmapped = Vec::new();
    for goal in report.failing_goals() {
        match goal.source_annotation.filter(|i| *i < spec.len()) {
            Some(i) => {
                mapped.insert(i);
            }
            None => unmapped.push(goal.goal_name.clone()),
        }
    }
    if unmapped.is_empty() && !mapped.is_empty() {
        Ok(mapped)
    } else {
        Err(MappingError::UnmappableFailure { mapped, unmapped })
    }
}

/// Annotation to drop when no failing goal could be traced: the last
/// goal-producing annotation without a proved goal, else the last
/// goal-producing one, else the last one.
pub fn tie_break(report: &VerifierReport, spec: &SpecificationSet) -> Option<usize> {
    let proved: BTreeSet<usize> = report
        .goals
        .iter()
        .filter(|g| g.status == GoalStatus::Proved)
        .filter_map(|g| g.source_annotation)
        .collect();
    let producing = || spec.iter().enumerate().rev().filter(|(_, a)| a.kind.generates_goals()).map(|(i, _)| i);
    producing()
        .find(|i| !proved.contains(i))
        .or_else(|| producing().next())
        .or_else(|| spec.len().checked_sub(1))
}
