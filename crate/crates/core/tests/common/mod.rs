//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use acsl_harness::acsl::SpecificationSet;
use acsl_harness::dataset::Program;
use acsl_harness::oracle::{Completion, Oracle, OracleError, OracleRequest};
use acsl_harness::refine::{Outcome, Paradigm, RunRecord};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Answers every request of attempt `k` with `texts[k]`, repeating the last
/// text once the list runs out.
pub struct Scripted(pub Vec<String>);

impl Oracle for Scripted {
    fn complete(&self, request: &OracleRequest) -> Result<Completion, OracleError> {
        let k = (request.attempt_index as usize).min(self.0.len().saturating_sub(1));
        self.0
            .get(k)
            .map(|t| Completion { text: t.clone(), reported_latency: Some(0.0) })
            .ok_or_else(|| OracleError::FixtureMissing("empty script".into()))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "oracle": "scripted", "attempts": self.0.len() })
    }
}

pub fn program(id: &str, source: &str, target: &str) -> Program {
    Program { id: id.into(), source: source.into(), target_function: target.into(), category: "test".into() }
}

pub fn record(persona: &str, config: &str, paradigm: Paradigm, program: &str, run: u32) -> RunRecord {
    RunRecord {
        program_id: program.into(),
        config_name: config.into(),
        paradigm,
        run_index: run,
        persona: persona.into(),
        compliant: true,
        outcome: Outcome::Exhausted,
        error: None,
        tool_calls: 0,
        elapsed: 0.0,
        iterations: 0,
        initial_size: 1,
        final_spec: SpecificationSet::empty(),
    }
}

pub fn program_id(i: usize) -> String {
    format!("prog{i:03}")
}
