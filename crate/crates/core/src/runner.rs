//! Running the full experiment grid and persisting its records.
//!
//! Records are appended to `records.jsonl` as soon as each run finishes, so
//! an interrupted experiment resumes by skipping every cell already on
//! disk. A sorted `records.csv` is rewritten at the end.

use std::collections::{BTreeSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acsl::SpecificationSet;
use crate::config::{Configuration, TemplateStore};
use crate::dataset::Program;
use crate::oracle::Oracle;
use crate::refine::{run_once, CallLog, Paradigm, RunContext, RunLimits, RunLog, RunRecord};
use crate::verifier::{Verifier, VerifierError, VerifierReport};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub configs: Vec<Configuration>,
    pub paradigms: Vec<Paradigm>,
    pub runs_per_cell: u32,
    pub limits: RunLimits,
    pub persona: String,
    pub verifier_id: String,
    /// Concurrent runs.
    pub workers: usize,
    /// Concurrent verifier invocations.
    pub verifier_jobs: usize,
}

impl ExperimentPlan {
    pub fn new(configs: Vec<Configuration>, paradigms: Vec<Paradigm>, persona: &str, verifier_id: &str) -> Self {
        let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
        ExperimentPlan {
            configs,
            paradigms,
            runs_per_cell: 5,
            limits: RunLimits::default(),
            persona: persona.to_string(),
            verifier_id: verifier_id.to_string(),
            workers: cpus,
            verifier_jobs: cpus,
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: &str| Err(RunnerError::InvalidPlan(m.to_string()));
        if self.configs.is_empty() {
            return bad("no configurations");
        }
        if self.paradigms.is_empty() {
            return bad("no paradigms");
        }
        if self.runs_per_cell == 0 {
            return bad("runs per cell must be positive");
        }
        if self.limits.max_repair_iterations == 0 || self.limits.wall_budget <= 0.0 {
            return bad("run limits must be positive");
        }
        if self.workers == 0 || self.verifier_jobs == 0 {
            return bad("worker counts must be positive");
        }
        Ok(())
    }
}

/// One unit of work: (program index, config index, paradigm, run index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cell {
    program: usize,
    config: usize,
    paradigm: Paradigm,
    run_index: u32,
}

/// Every (program, config, paradigm, run) of the plan in a fixed order.
fn cells(plan: &ExperimentPlan, corpus: &[Program]) -> Vec<Cell> {
    let mut out = Vec::new();
    for program in 0..corpus.len() {
        for config in 0..plan.configs.len() {
            for &paradigm in &plan.paradigms {
                for run_index in 1..=plan.runs_per_cell {
                    out.push(Cell { program, config, paradigm, run_index });
                }
            }
        }
    }
    out
}

/// Caps concurrent calls into the wrapped verifier.
struct Throttled<'a> {
    inner: &'a dyn Verifier,
    free: Mutex<usize>,
    available: Condvar,
}

impl Verifier for Throttled<'_> {
    fn verify(&self, program: &Program, spec: &SpecificationSet) -> Result<VerifierReport, VerifierError> {
        {
            let mut free = self.free.lock().expect("semaphore poisoned");
            while *free == 0 {
                free = self.available.wait(free).expect("semaphore poisoned");
            }
            *free -= 1;
        }
        let result = self.inner.verify(program, spec);
        *self.free.lock().expect("semaphore poisoned") += 1;
        self.available.notify_one();
        result
    }

    fn describe(&self) -> serde_json::Value {
        self.inner.describe()
    }
}

/// Appends each verifier call of a run to its own JSONL file.
struct FileLog {
    file: Option<File>,
}

impl RunLog for FileLog {
    fn record(&mut self, entry: &CallLog) {
        if let Some(f) = &mut self.file {
            if let Ok(line) = serde_json::to_string(entry) {
                let _ = writeln!(f, "{line}");
            }
        }
    }
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const RECORDS_CSV: &str = "records.csv";

/// Reads persisted records, dropping a trailing partial line left by an
/// interrupted write.
pub fn load_records(path: &Path) -> Result<Vec<RunRecord>, RunnerError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    let mut good_bytes = 0u64;
    let mut truncated = false;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        match serde_json::from_str::<RunRecord>(&line) {
            Ok(r) => {
                records.push(r);
                good_bytes += line.len() as u64 + 1;
            }
            Err(_) if line.trim().is_empty() => good_bytes += line.len() as u64 + 1,
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "dropping unreadable record line and everything after it");
                truncated = true;
                break;
            }
        }
    }
    if truncated {
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(good_bytes).map_err(io_err(path))?;
    }
    Ok(records)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after this many new records (an interruption, for testing resume).
    pub max_new_records: Option<usize>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// All records of the plan present on disk, sorted by key.
    pub records: Vec<RunRecord>,
    pub new_records: usize,
}

/// Runs every plan cell that `out_dir` does not already hold a record for.
pub fn run_experiment(
    plan: &ExperimentPlan,
    corpus: &[Program],
    oracle: &dyn Oracle,
    verifier: &dyn Verifier,
    templates: &TemplateStore,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<ExperimentOutcome, RunnerError> {
    plan.validate()?;
    if corpus.is_empty() {
        return Err(RunnerError::InvalidPlan("empty corpus".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_run_config(plan, corpus, oracle, verifier, out_dir)?;

    let records_path = out_dir.join(RECORDS_FILE);
    let existing = load_records(&records_path)?;
    let done: BTreeSet<_> = existing.iter().map(RunRecord::key).collect();
    let pending: VecDeque<Cell> = cells(plan, corpus)
        .into_iter()
        .filter(|c| {
            let key = (
                corpus[c.program].id.clone(),
                plan.configs[c.config].name.clone(),
                c.paradigm,
                c.run_index,
            );
            !done.contains(&key)
        })
        .collect();
    let budget = options.max_new_records.unwrap_or(usize::MAX).min(pending.len());
    tracing::info!(existing = existing.len(), pending = pending.len(), budget, "starting experiment");

    let mut writer = OpenOptions::new().create(true).append(true).open(&records_path).map_err(io_err(&records_path))?;
    let queue = Mutex::new(pending);
    let claimed = AtomicUsize::new(0);
    let throttled = Throttled { inner: verifier, free: Mutex::new(plan.verifier_jobs), available: Condvar::new() };
    let logs_dir = out_dir.join("logs");
    let mut new_records = Vec::new();
    let mut write_error = None;

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<RunRecord>();
        for _ in 0..plan.workers.min(budget.max(1)) {
            let tx = tx.clone();
            let (queue, claimed, throttled, logs_dir) = (&queue, &claimed, &throttled, &logs_dir);
            scope.spawn(move || loop {
                if claimed.fetch_add(1, Ordering::SeqCst) >= budget {
                    return;
                }
                let Some(cell) = queue.lock().expect("queue poisoned").pop_front() else { return };
                let program = &corpus[cell.program];
                let config = &plan.configs[cell.config];
                let log_dir = logs_dir.join(&program.id);
                let log_file = std::fs::create_dir_all(&log_dir).ok().and_then(|_| {
                    File::create(log_dir.join(format!("{}-{}-run{}.jsonl", config.name, cell.paradigm, cell.run_index)))
                        .ok()
                });
                let ctx = RunContext {
                    program,
                    config,
                    paradigm: cell.paradigm,
                    run_index: cell.run_index,
                    persona: &plan.persona,
                    oracle,
                    verifier: throttled,
                    templates,
                    limits: plan.limits,
                };
                let record = run_once(&ctx, &mut FileLog { file: log_file });
                if tx.send(record).is_err() {
                    return;
                }
            });
        }
        drop(tx);
        for record in rx {
            let line = serde_json::to_string(&record).expect("records serialize");
            if let Err(e) = writeln!(writer, "{line}").and_then(|_| writer.flush()) {
                write_error.get_or_insert(e);
            }
            tracing::debug!(program = %record.program_id, config = %record.config_name, paradigm = %record.paradigm, run = record.run_index, outcome = ?record.outcome, "run finished");
            new_records.push(record);
        }
    });
    if let Some(e) = write_error {
        return Err(RunnerError::Io { path: records_path, source: e });
    }

    let new_count = new_records.len();
    let mut records = existing;
    records.extend(new_records);
    records.sort_by_key(RunRecord::key);
    write_csv(&records, &out_dir.join(RECORDS_CSV))?;
    Ok(ExperimentOutcome { records, new_records: new_count })
}

fn write_run_config(
    plan: &ExperimentPlan,
    corpus: &[Program],
    oracle: &dyn Oracle,
    verifier: &dyn Verifier,
    out_dir: &Path,
) -> Result<(), RunnerError> {
    let config = serde_json::json!({
        "plan": plan,
        "programs": corpus.iter().map(|p| &p.id).collect::<Vec<_>>(),
        "oracle": oracle.describe(),
        "verifier": verifier.describe(),
    });
    let path = out_dir.join("run_config.json");
    let text = serde_json::to_string_pretty(&config).expect("plan serializes");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    program_id: &'a str,
    config: &'a str,
    paradigm: Paradigm,
    run_index: u32,
    persona: &'a str,
    compliant: bool,
    outcome: String,
    error_kind: &'a str,
    tool_calls: u32,
    elapsed: f64,
    iterations: u32,
    initial_size: usize,
    final_size: usize,
}

pub fn write_csv(records: &[RunRecord], path: &Path) -> Result<(), RunnerError> {
    let csv_err = |source| RunnerError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in records {
        w.serialize(CsvRow {
            program_id: &r.program_id,
            config: &r.config_name,
            paradigm: r.paradigm,
            run_index: r.run_index,
            persona: &r.persona,
            compliant: r.compliant,
            outcome: format!("{:?}", r.outcome),
            error_kind: r.error.as_ref().map_or("", |e| e.kind.as_str()),
            tool_calls: r.tool_calls,
            elapsed: r.elapsed,
            iterations: r.iterations,
            initial_size: r.initial_size,
            final_size: r.final_spec.len(),
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// True when some record failed for infrastructure reasons (verifier tool
/// errors or an unreachable oracle).
pub fn has_infrastructure_errors(records: &[RunRecord]) -> bool {
    records.iter().any(|r| r.error.as_ref().is_some_and(|e| e.is_infrastructure()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::canonical_config;
    use crate::oracle::{Completion, OracleError, OracleRequest};
    use crate::refine::Outcome;
    use crate::verifier::{MockTable, MockVerifier};

    struct Echo;

    impl Oracle for Echo {
        fn complete(&self, r: &OracleRequest) -> Result<Completion, OracleError> {
            Ok(Completion {
                text: format!("/*@ ensures \\result == {}; */\nint f(void) {{ return 0; }}", r.run_index % 2),
                reported_latency: Some(1.0),
            })
        }

        fn describe(&self) -> serde_json::Value {
            serde_json::json!("echo")
        }
    }

    fn corpus(n: usize) -> Vec<Program> {
        (0..n)
            .map(|i| Program {
                id: format!("p{i:02}"),
                source: "int f(void) { return 0; }\n".into(),
                target_function: "f".into(),
                category: "c".into(),
            })
            .collect()
    }

    fn plan() -> ExperimentPlan {
        let mut plan = ExperimentPlan::new(
            vec![canonical_config("CB").unwrap(), canonical_config("CF").unwrap()],
            Paradigm::ALL.to_vec(),
            "echo",
            "mock",
        );
        plan.runs_per_cell = 3;
        plan.workers = 4;
        plan
    }

    #[test]
    fn grid_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let verifier = MockVerifier::new(MockTable {
            rules: crate::verifier::MockRules {
                failing_texts: ["ensures \\result == 1;".into()].into(),
                ..Default::default()
            },
            ..Default::default()
        });
        let corpus = corpus(3);
        let templates = TemplateStore::builtin();
        let first = run_experiment(
            &plan(),
            &corpus,
            &Echo,
            &verifier,
            &templates,
            dir.path(),
            &RunOptions { max_new_records: Some(5) },
        )
        .unwrap();
        assert_eq!(first.new_records, 5);
        let second =
            run_experiment(&plan(), &corpus, &Echo, &verifier, &templates, dir.path(), &RunOptions::default()).unwrap();
        assert_eq!(second.new_records, 3 * 2 * 2 * 3 - 5);
        assert_eq!(second.records.len(), 36);
        let keys: BTreeSet<_> = second.records.iter().map(RunRecord::key).collect();
        assert_eq!(keys.len(), 36);
        assert!(second.records.iter().any(|r| r.outcome == Outcome::Verified));
        assert!(!has_infrastructure_errors(&second.records));
        assert!(dir.path().join("records.csv").exists());
        assert!(dir.path().join("logs/p00/CB-deletion-run1.jsonl").exists());
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = corpus(1);
        let verifier = MockVerifier::new(MockTable::default());
        let templates = TemplateStore::builtin();
        run_experiment(&plan(), &corpus, &Echo, &verifier, &templates, dir.path(), &RunOptions { max_new_records: Some(2) })
            .unwrap();
        let path = dir.path().join(RECORDS_FILE);
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"program_id\": \"p0");
        std::fs::write(&path, text).unwrap();
        assert_eq!(load_records(&path).unwrap().len(), 2);
        let done =
            run_experiment(&plan(), &corpus, &Echo, &verifier, &templates, dir.path(), &RunOptions::default()).unwrap();
        assert_eq!(done.new_records, 10);
        assert_eq!(load_records(&path).unwrap().len(), 12);
    }

    #[test]
    fn invalid_plans() {
        let mut p = plan();
        p.paradigms.clear();
        assert!(p.validate().is_err());
        let mut p = plan();
        p.runs_per_cell = 0;
        assert!(p.validate().is_err());
    }
}
