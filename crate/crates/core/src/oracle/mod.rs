//! Specification oracles: anything that turns a prompt into a completion
//! containing ACSL.

mod http;
mod replay;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acsl::{parse_annotations_lenient, AcslError, SpecificationSet};
use crate::config::Phase;

pub use http::{HttpOracle, HttpOracleSettings};
pub use replay::ReplayOracle;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle unavailable after {attempts} attempt(s): {last_error}")]
    OracleUnavailable { attempts: u32, last_error: String },
    #[error("completion contains no usable annotation{}", detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default())]
    EmptyCompletion { detail: Option<String> },
    #[error("no replay fixture at {0}")]
    FixtureMissing(String),
    #[error("oracle configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub phase: Phase,
    pub program_id: String,
    pub config_name: String,
    /// 0 for the initial proposal, then 1, 2, ... for successive repairs.
    pub attempt_index: u32,
    /// 1-based index of the independent run this request belongs to.
    pub run_index: u32,
    pub prompt: String,
}

/// Raw oracle output.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Latency the oracle claims for itself; replayed completions use it in
    /// place of the time actually spent.
    pub reported_latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub raw_completion: String,
    pub extracted: SpecificationSet,
    /// Seconds.
    pub latency: f64,
    /// Annotation-like items that could not be parsed or classified and
    /// were left out of `extracted`.
    pub rejected: Vec<String>,
}

/// Must be safe to call concurrently for different runs.
pub trait Oracle: Send + Sync {
    fn complete(&self, request: &OracleRequest) -> Result<Completion, OracleError>;

    /// Parameters worth recording next to experiment results.
    fn describe(&self) -> serde_json::Value;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no annotations found")]
    NoAnnotationsFound { rejected: Vec<String> },
    #[error("{0}")]
    Unparseable(AcslError),
}

/// Annotations found in a completion.
///
/// Fenced code blocks are concatenated and parsed as one C file; without
/// fences the whole completion is parsed, which picks up bare `/*@ */`
/// regions. Items that do not parse are returned separately.
pub fn extract_spec(raw: &str) -> Result<(SpecificationSet, Vec<String>), ExtractError> {
    let blocks = fenced_blocks(raw);
    let text = if blocks.is_empty() { raw.to_string() } else { blocks.join("\n") };
    let (spec, errors) = parse_annotations_lenient(&text).map_err(ExtractError::Unparseable)?;
    let rejected: Vec<String> = errors.iter().map(ToString::to_string).collect();
    if spec.is_empty() {
        return Err(ExtractError::NoAnnotationsFound { rejected });
    }
    Ok((spec, rejected))
}

fn fenced_blocks(raw: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in raw.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    // An unclosed fence still counts: completions are often truncated.
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    blocks
}

fn respond(oracle: &dyn Oracle, request: &OracleRequest) -> Result<OracleResponse, OracleError> {
    let start = Instant::now();
    let completion = oracle.complete(request)?;
    let latency = completion.reported_latency.unwrap_or_else(|| start.elapsed().as_secs_f64()).max(0.0);
    if completion.text.trim().is_empty() {
        return Err(OracleError::EmptyCompletion { detail: None });
    }
    match extract_spec(&completion.text) {
        Ok((extracted, rejected)) => {
            Ok(OracleResponse { raw_completion: completion.text, extracted, latency, rejected })
        }
        Err(ExtractError::NoAnnotationsFound { rejected }) => Err(OracleError::EmptyCompletion {
            detail: (!rejected.is_empty()).then(|| rejected.join("; ")),
        }),
        Err(ExtractError::Unparseable(e)) => Err(OracleError::EmptyCompletion { detail: Some(e.to_string()) }),
    }
}

/// Initial proposal for a program (attempt 0).
pub fn propose(
    oracle: &dyn Oracle,
    program_id: &str,
    config_name: &str,
    run_index: u32,
    prompt: String,
) -> Result<OracleResponse, OracleError> {
    let request = OracleRequest {
        phase: Phase::Generate,
        program_id: program_id.to_string(),
        config_name: config_name.to_string(),
        attempt_index: 0,
        run_index,
        prompt,
    };
    respond(oracle, &request)
}

/// Full replacement specification for repair round `attempt_index` (from 1).
pub fn repair(
    oracle: &dyn Oracle,
    program_id: &str,
    config_name: &str,
    run_index: u32,
    attempt_index: u32,
    prompt: String,
) -> Result<OracleResponse, OracleError> {
    let request = OracleRequest {
        phase: Phase::Repair,
        program_id: program_id.to_string(),
        config_name: config_name.to_string(),
        attempt_index,
        run_index,
        prompt,
    };
    respond(oracle, &request)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acsl::{constr, parse_annotations, Anchor, ConstructKind};

    #[test]
    fn one_fenced_block() {
        let raw = "Here you go:\n```c\n/*@ requires x >= 0;\n    ensures \\result == x; */\nint id(int x) { return x; }\n```\nDone.";
        let (spec, rejected) = extract_spec(raw).unwrap();
        assert_eq!(spec.len(), 2);
        assert!(rejected.is_empty());
    }

    #[test]
    fn prose_only() {
        assert!(matches!(extract_spec("I cannot help with that."), Err(ExtractError::NoAnnotationsFound { .. })));
    }

    #[test]
    fn two_blocks_keep_both_anchors() {
        let raw = "```\n/*@ lemma l: \\true; */\n```\nand\n```c\n/*@ ensures \\result == 0; */\nint z(void) { return 0; }\n```";
        let (spec, _) = extract_spec(raw).unwrap();
        let anchors: Vec<_> = spec.iter().map(|a| a.anchor.clone()).collect();
        assert_eq!(anchors, [Anchor::Global, Anchor::contract("z")]);
    }

    #[test]
    fn bare_regions_without_fences() {
        let raw = "/*@ predicate pos(integer x) = x > 0; */\n/*@ requires pos(x); */\nint f(int x) { return x; }";
        let (spec, _) = extract_spec(raw).unwrap();
        assert_eq!(constr(&spec), [ConstructKind::Predicate, ConstructKind::Requires].into());
    }

    #[test]
    fn extraction_matches_parse_on_a_woven_block() {
        let block = "/*@\n  lemma a: \\true;\n*/\n/*@ requires \\true;\n    assigns \\nothing;\n*/\nvoid f(void) {}\n";
        assert_eq!(extract_spec(block).unwrap().0, parse_annotations(block).unwrap());
    }

    #[test]
    fn unsupported_items_are_rejected_not_fatal() {
        let raw = "```c\n/*@ requires \\true;\n    ghost int g; */\nvoid f(void) {}\n```";
        let (spec, rejected) = extract_spec(raw).unwrap();
        assert_eq!(spec.len(), 1);
        assert_eq!(rejected.len(), 1);
    }

    struct Fixed(&'static str);

    impl Oracle for Fixed {
        fn complete(&self, _: &OracleRequest) -> Result<Completion, OracleError> {
            Ok(Completion { text: self.0.to_string(), reported_latency: Some(2.5) })
        }

        fn describe(&self) -> serde_json::Value {
            serde_json::Value::Null
        }
    }

    #[test]
    fn empty_completion() {
        assert!(matches!(
            propose(&Fixed("  \n"), "p", "CB", 1, "prompt".into()),
            Err(OracleError::EmptyCompletion { .. })
        ));
        assert!(matches!(
            repair(&Fixed("no code here"), "p", "CB", 1, 1, "prompt".into()),
            Err(OracleError::EmptyCompletion { .. })
        ));
    }

    #[test]
    fn reported_latency_is_used() {
        let r = propose(&Fixed("/*@ ensures \\true; */ void f(void) {}"), "p", "CB", 1, "x".into()).unwrap();
        assert_eq!(r.latency, 2.5);
        assert_eq!(r.extracted.len(), 1);
    }
}
