//! Syntactic-construct configurations, compliance checking and prompt
//! construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acsl::{constr, weave, ConstructKind, SpecificationSet};
use crate::dataset::Program;
use crate::verifier::{GoalStatus, VerifierReport};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown configuration `{0}` (expected one of CB, CV, CA, CF)")]
    UnknownConfiguration(String),
    #[error("configuration `{name}`: mandatory constructs {missing:?} are not permitted")]
    MandatoryNotPermitted { name: String, missing: Vec<ConstructKind> },
    #[error("no {phase} template for configuration `{config}`")]
    MissingTemplate { config: String, phase: Phase },
    #[error("reading templates from {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A named pair of permitted and mandatory construct sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub name: String,
    pub permitted: BTreeSet<ConstructKind>,
    pub mandatory: BTreeSet<ConstructKind>,
}

impl Configuration {
    pub fn new(
        name: impl Into<String>,
        permitted: impl IntoIterator<Item = ConstructKind>,
        mandatory: impl IntoIterator<Item = ConstructKind>,
    ) -> Result<Self, ConfigError> {
        let name = name.into();
        let permitted: BTreeSet<_> = permitted.into_iter().collect();
        let mandatory: BTreeSet<_> = mandatory.into_iter().collect();
        let missing: Vec<_> = mandatory.difference(&permitted).copied().collect();
        if !missing.is_empty() {
            return Err(ConfigError::MandatoryNotPermitted { name, missing });
        }
        Ok(Configuration { name, permitted, mandatory })
    }
}

pub const CANONICAL_NAMES: [&str; 4] = ["CB", "CV", "CA", "CF"];

/// One of the four built-in configurations.
pub fn canonical_config(name: &str) -> Result<Configuration, ConfigError> {
    use ConstructKind::*;
    let basic = ConstructKind::BASIC;
    let (extra, mandatory): (&[ConstructKind], &[ConstructKind]) = match name {
        "CB" => (&[], &[]),
        "CV" => (&[Predicate, Logic, Lemma], &[Predicate, Logic, Lemma]),
        "CA" => (&[Predicate, Logic, Axiom], &[Axiom]),
        "CF" => (&[Predicate, Logic, Lemma, Axiom], &[]),
        other => return Err(ConfigError::UnknownConfiguration(other.to_string())),
    };
    Configuration::new(name, basic.iter().chain(extra).copied(), mandatory.iter().copied())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceVerdict {
    pub compliant: bool,
    pub forbidden_used: BTreeSet<ConstructKind>,
    pub mandatory_missing: bool,
}

pub fn check_compliance(spec: &SpecificationSet, config: &Configuration) -> ComplianceVerdict {
    compliance_of_kinds(&constr(spec), config)
}

/// Compliance of a bare construct set.
pub fn compliance_of_kinds(used: &BTreeSet<ConstructKind>, config: &Configuration) -> ComplianceVerdict {
    let forbidden_used: BTreeSet<_> = used.difference(&config.permitted).copied().collect();
    let mandatory_missing = !config.mandatory.is_empty() && used.is_disjoint(&config.mandatory);
    ComplianceVerdict { compliant: forbidden_used.is_empty() && !mandatory_missing, forbidden_used, mandatory_missing }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Generate,
    Repair,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Generate => "generate",
            Phase::Repair => "repair",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const BUILTIN: [(&str, Phase, &str); 8] = [
    ("CB", Phase::Generate, include_str!("../templates/CB-generate.txt")),
    ("CB", Phase::Repair, include_str!("../templates/CB-repair.txt")),
    ("CV", Phase::Generate, include_str!("../templates/CV-generate.txt")),
    ("CV", Phase::Repair, include_str!("../templates/CV-repair.txt")),
    ("CA", Phase::Generate, include_str!("../templates/CA-generate.txt")),
    ("CA", Phase::Repair, include_str!("../templates/CA-repair.txt")),
    ("CF", Phase::Generate, include_str!("../templates/CF-generate.txt")),
    ("CF", Phase::Repair, include_str!("../templates/CF-repair.txt")),
];

/// Prompt templates keyed by configuration name and phase.
///
/// Templates are plain text with `{name}` placeholders: `{program}`,
/// `{permitted_keywords}`, `{mandatory_instruction}`, and for repairs
/// `{specification}` and `{feedback}`. Unknown placeholders are left as is.
#[derive(Debug, Clone, Default)]
pub struct TemplateStore {
    templates: BTreeMap<(String, Phase), String>,
}

impl TemplateStore {
    pub fn builtin() -> Self {
        let templates = BUILTIN.iter().map(|(c, p, t)| ((c.to_string(), *p), t.to_string())).collect();
        TemplateStore { templates }
    }

    /// Built-in templates overridden by any `<CONFIG>-<phase>.txt` file in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, ConfigError> {
        let mut store = Self::builtin();
        let io = |source| ConfigError::Io { path: dir.display().to_string(), source };
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some((config, phase)) = stem.rsplit_once('-') else { continue };
            let phase = match phase {
                "generate" => Phase::Generate,
                "repair" => Phase::Repair,
                _ => continue,
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
            store.insert(config, phase, text);
        }
        Ok(store)
    }

    pub fn insert(&mut self, config: &str, phase: Phase, text: impl Into<String>) {
        self.templates.insert((config.to_string(), phase), text.into());
    }

    pub fn get(&self, config: &str, phase: Phase) -> Result<&str, ConfigError> {
        self.templates
            .get(&(config.to_string(), phase))
            .map(String::as_str)
            .ok_or_else(|| ConfigError::MissingTemplate { config: config.to_string(), phase })
    }
}

/// Replaces `{key}` placeholders in one pass, so substituted text is never
/// scanned again.
pub fn render(template: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let key = after.find('}').map(|close| &after[..close]);
        match key.and_then(|k| vars.get(k).map(|v| (k, v))) {
            Some((k, value)) => {
                out.push_str(value);
                rest = &after[k.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn keyword_list(kinds: &BTreeSet<ConstructKind>) -> String {
    ConstructKind::ALL
        .iter()
        .filter(|k| kinds.contains(k))
        .map(|k| format!("`{}`", k.keyword()))
        .collect::<Vec<_>>()
        .join(", ")
}

fn mandatory_instruction(config: &Configuration) -> String {
    if config.mandatory.is_empty() {
        return String::new();
    }
    let names = keyword_list(&config.mandatory);
    if config.mandatory.len() == 1 {
        format!("Your specification MUST use at least one {names} declaration.")
    } else {
        format!("Your specification MUST use at least one of the following constructs: {names}.")
    }
}

fn base_vars(program: &Program, config: &Configuration) -> BTreeMap<&'static str, String> {
    let mut vars = BTreeMap::new();
    vars.insert("program", program.source.clone());
    vars.insert("target_function", program.target_function.clone());
    vars.insert("permitted_keywords", keyword_list(&config.permitted));
    vars.insert("mandatory_instruction", mandatory_instruction(config));
    vars
}

pub fn build_generation_prompt(
    program: &Program,
    config: &Configuration,
    templates: &TemplateStore,
) -> Result<String, ConfigError> {
    let template = templates.get(&config.name, Phase::Generate)?;
    Ok(render(template, &base_vars(program, config)))
}

/// Repair prompt embedding the current specification (woven into the
/// program when possible) and the goals the verifier could not prove.
pub fn build_repair_prompt(
    program: &Program,
    config: &Configuration,
    spec: &SpecificationSet,
    report: &VerifierReport,
    templates: &TemplateStore,
) -> Result<String, ConfigError> {
    let template = templates.get(&config.name, Phase::Repair)?;
    let mut vars = base_vars(program, config);
    let specification = weave(&program.source, spec).unwrap_or_else(|_| {
        spec.iter().map(|a| format!("{}: {}", a.anchor, a.text)).collect::<Vec<_>>().join("\n")
    });
    vars.insert("specification", specification);
    vars.insert("feedback", feedback_text(spec, report));
    Ok(render(template, &vars))
}

/// Failing goals, one per line, with the annotation each one was traced to.
pub fn feedback_text(spec: &SpecificationSet, report: &VerifierReport) -> String {
    let mut lines = vec![format!("Verifier status: {}", report.status)];
    for goal in report.goals.iter().filter(|g| g.status != GoalStatus::Proved) {
        let mut line = format!("- {} [{}]", goal.goal_name, goal.status);
        if let Some(l) = goal.line {
            line.push_str(&format!(" at line {l}"));
        }
        if let Some(a) = goal.source_annotation.and_then(|i| spec.get(i)) {
            line.push_str(&format!(": {}", a.text));
        }
        lines.push(line);
    }
    lines.join("\n")
}
