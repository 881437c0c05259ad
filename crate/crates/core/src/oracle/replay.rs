//! Replays stored completions.
//!
//! Layout: `<root>/<persona>/<program_id>/<config>/<phase>-<attempt>.txt`.
//! A file named `<phase>-<attempt>.run<k>.txt` next to it takes precedence
//! for run `k`, so runs can differ where needed.

use std::path::{Path, PathBuf};

use super::{Completion, Oracle, OracleError, OracleRequest};

#[derive(Debug, Clone)]
pub struct ReplayOracle {
    dir: PathBuf,
    persona: String,
    latency: f64,
}

impl ReplayOracle {
    pub fn new(root: &Path, persona: &str) -> Result<Self, OracleError> {
        let dir = root.join(persona);
        if !dir.is_dir() {
            return Err(OracleError::Config(format!("replay persona directory {} does not exist", dir.display())));
        }
        Ok(ReplayOracle { dir, persona: persona.to_string(), latency: 0.0 })
    }

    /// Latency reported for every completion, in seconds.
    pub fn with_latency(mut self, seconds: f64) -> Self {
        self.latency = seconds.max(0.0);
        self
    }

    fn fixture_paths(&self, request: &OracleRequest) -> [PathBuf; 2] {
        let base = self.dir.join(&request.program_id).join(&request.config_name);
        let stem = format!("{}-{}", request.phase, request.attempt_index);
        [base.join(format!("{stem}.run{}.txt", request.run_index)), base.join(format!("{stem}.txt"))]
    }
}

impl Oracle for ReplayOracle {
    fn complete(&self, request: &OracleRequest) -> Result<Completion, OracleError> {
        let [per_run, shared] = self.fixture_paths(request);
        let path = if per_run.is_file() { per_run } else { shared };
        let text = std::fs::read_to_string(&path).map_err(|_| OracleError::FixtureMissing(path.display().to_string()))?;
        Ok(Completion { text, reported_latency: Some(self.latency) })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "oracle": "replay", "persona": self.persona, "latency": self.latency })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Phase;
    use crate::oracle::{propose, repair};

    fn fixture(root: &Path, rel: &str, text: &str) {
        let p = root.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    }

    const THREE: &str = "/*@ requires \\true;\n    ensures \\result == x;\n    assigns \\nothing; */\nint id(int x) { return x; }\n";

    #[test]
    fn lookup_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), "m/prog1/CB/generate-0.txt", THREE);
        let oracle = ReplayOracle::new(dir.path(), "m").unwrap();
        let a = propose(&oracle, "prog1", "CB", 1, "p".into()).unwrap();
        let b = propose(&oracle, "prog1", "CB", 2, "p".into()).unwrap();
        assert_eq!(a.extracted.len(), 3);
        assert_eq!(a.raw_completion, b.raw_completion);
        assert_eq!(a.extracted, b.extracted);
    }

    #[test]
    fn repair_chain_and_run_override() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), "m/p/CV/generate-0.txt", "/*@ ensures \\result == 1; */ int id(int x) { return x; }");
        fixture(dir.path(), "m/p/CV/repair-1.txt", THREE);
        fixture(dir.path(), "m/p/CV/repair-1.run2.txt", "/*@ ensures \\result >= x; */ int id(int x) { return x; }");
        let oracle = ReplayOracle::new(dir.path(), "m").unwrap();
        assert_eq!(repair(&oracle, "p", "CV", 1, 1, "r".into()).unwrap().extracted.len(), 3);
        assert_eq!(repair(&oracle, "p", "CV", 2, 1, "r".into()).unwrap().extracted.len(), 1);
    }

    #[test]
    fn missing_fixture() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("m")).unwrap();
        let oracle = ReplayOracle::new(dir.path(), "m").unwrap();
        let req = OracleRequest {
            phase: Phase::Repair,
            program_id: "p".into(),
            config_name: "CB".into(),
            attempt_index: 3,
            run_index: 1,
            prompt: "x".into(),
        };
        assert!(matches!(oracle.complete(&req), Err(OracleError::FixtureMissing(_))));
        assert!(ReplayOracle::new(dir.path(), "nobody").is_err());
    }
}
