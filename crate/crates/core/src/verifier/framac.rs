//! Frama-C/WP adapter.
//!
//! Runs `frama-c -wp` on the woven program in a private temporary
//! directory and reads the per-goal verdicts from its console output and
//! from the CSV property report.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{anchor_failures, link_goals, weave_with_spans, GoalResult, GoalStatus, Verifier, VerifierError, VerifierReport, VerifierStatus};
use crate::acsl::SpecificationSet;
use crate::dataset::Program;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FramaCSettings {
    pub executable: PathBuf,
    /// Per-goal prover timeout in seconds.
    pub prover_timeout: u32,
    /// Wall-clock budget for one invocation, in seconds.
    pub wall_budget: f64,
    pub provers: Option<String>,
    pub extra_args: Vec<String>,
}

impl Default for FramaCSettings {
    fn default() -> Self {
        FramaCSettings {
            executable: PathBuf::from("frama-c"),
            prover_timeout: 10,
            wall_budget: 120.0,
            provers: None,
            extra_args: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FramaC {
    settings: FramaCSettings,
}

impl FramaC {
    /// Fails with `VerifierNotInstalled` when the executable cannot be run.
    pub fn new(settings: FramaCSettings) -> Result<Self, VerifierError> {
        let probe = Command::new(&settings.executable)
            .arg("-version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status();
        match probe {
            Ok(_) => Ok(FramaC { settings }),
            Err(_) => Err(VerifierError::VerifierNotInstalled(settings.executable.display().to_string())),
        }
    }

    pub fn settings(&self) -> &FramaCSettings {
        &self.settings
    }
}

impl Verifier for FramaC {
    fn verify(&self, program: &Program, spec: &SpecificationSet) -> Result<VerifierReport, VerifierError> {
        if let Some(report) = anchor_failures(program, spec) {
            return Ok(report);
        }
        let file_name = format!("{}.c", program.id);
        let (woven, spans) = weave_with_spans(program, spec, &file_name)?;
        let io = |context: &str| {
            let context = context.to_string();
            move |source| VerifierError::Io { context, source }
        };
        let dir = tempfile::tempdir().map_err(io("creating temporary directory"))?;
        let c_path = dir.path().join(&file_name);
        let csv_path = dir.path().join("report.csv");
        std::fs::write(&c_path, &woven).map_err(io("writing woven program"))?;

        let mut cmd = Command::new(&self.settings.executable);
        cmd.current_dir(dir.path())
            .arg("-wp")
            .arg("-wp-timeout")
            .arg(self.settings.prover_timeout.to_string());
        if let Some(p) = &self.settings.provers {
            cmd.arg("-wp-prover").arg(p);
        }
        cmd.args(&self.settings.extra_args)
            .arg(&file_name)
            .arg("-then")
            .arg("-report-csv")
            .arg(&csv_path)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());

        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                VerifierError::VerifierNotInstalled(self.settings.executable.display().to_string())
            }
            _ => VerifierError::Io { context: "starting frama-c".into(), source: e },
        })?;
        let mut stdout = child.stdout.take().expect("piped");
        let mut stderr = child.stderr.take().expect("piped");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let budget = Duration::from_secs_f64(self.settings.wall_budget);
        let exit = loop {
            if let Some(status) = child.try_wait().map_err(io("waiting for frama-c"))? {
                break Some(status);
            }
            if start.elapsed() >= budget {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(Duration::from_millis(20));
        };
        let wall_time = start.elapsed().as_secs_f64();
        let mut raw = out_reader.join().unwrap_or_default();
        raw.push_str(&err_reader.join().unwrap_or_default());

        let Some(exit) = exit else {
            let mut goals = parse_framac_output(&raw, None, &file_name);
            link_goals(&mut goals, spec, &spans);
            tracing::warn!(program = %program.id, wall_time, "frama-c exceeded its wall budget");
            return Ok(VerifierReport { status: VerifierStatus::Timeout, goals, raw_output: raw, wall_time });
        };
        let csv = std::fs::read_to_string(&csv_path).ok();
        let mut goals = parse_framac_output(&raw, csv.as_deref(), &file_name);
        if goals.is_empty() && !exit.success() {
            return Ok(VerifierReport::tool_error(raw, wall_time));
        }
        link_goals(&mut goals, spec, &spans);
        Ok(VerifierReport::from_goals(goals, raw, wall_time))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "adapter": "framac", "settings": self.settings })
    }
}

/// Extracts goal verdicts.
///
/// Sources, in order of preference: the CSV property report (one row per
/// property with its line), then WP's console goal lines. Kernel errors
/// pointing into the woven file become unknown goals at that line, so an
/// ill-formed annotation can be blamed like any failing one.
pub fn parse_framac_output(console: &str, csv: Option<&str>, file_name: &str) -> Vec<GoalResult> {
    let mut goals = Vec::new();
    for line in console.lines() {
        if let Some(l) = kernel_error_line(line, file_name) {
            goals.push(GoalResult::new(format!("kernel_error_line_{l}"), GoalStatus::Unknown).at_line(l));
        }
    }
    if !goals.is_empty() {
        return goals;
    }

    let console_goals: Vec<GoalResult> = console.lines().filter_map(wp_goal_line).collect();
    if let Some(csv) = csv {
        let rows = csv_properties(csv, file_name);
        if !rows.is_empty() {
            goals.extend(rows);
            // Console lemma verdicts carry the lemma name.
            goals.extend(
                console_goals
                    .into_iter()
                    .filter(|g| g.goal_name.contains("lemma_") && g.status != GoalStatus::Proved),
            );
            return goals;
        }
    }
    console_goals
}

fn kernel_error_line(line: &str, file_name: &str) -> Option<u32> {
    let at = line.find(file_name)?;
    let after = line[at + file_name.len()..].strip_prefix(':')?;
    let digits: String = after.chars().take_while(char::is_ascii_digit).collect();
    let n = digits.parse().ok()?;
    let lower = line.to_ascii_lowercase();
    let is_error = lower.contains("[kernel]") && (lower.contains("error") || lower.contains("unexpected token"));
    is_error.then_some(n)
}

/// `[wp] [Valid] typed_f_ensures (Qed)` or `[wp] Goal typed_f_ensures : Valid`.
fn wp_goal_line(line: &str) -> Option<GoalResult> {
    let rest = line.trim().strip_prefix("[wp]")?.trim();
    let (status, name) = if let Some(tail) = rest.strip_prefix("Goal ") {
        let (name, status) = tail.split_once(':')?;
        (status.split_whitespace().next()?, name.trim())
    } else {
        let inner = rest.strip_prefix('[')?;
        let (status, tail) = inner.split_once(']')?;
        (status, tail.split_whitespace().next()?)
    };
    let status = goal_status(status)?;
    name.starts_with("typed").then(|| GoalResult::new(name, status))
}

fn goal_status(word: &str) -> Option<GoalStatus> {
    match word.trim().trim_end_matches('.').to_ascii_lowercase().as_str() {
        "valid" | "proved" | "qed" => Some(GoalStatus::Proved),
        "unknown" | "failed" | "invalid" | "stepout" | "unsuccess" => Some(GoalStatus::Unknown),
        "timeout" => Some(GoalStatus::Timeout),
        _ => None,
    }
}

/// Rows of `-report-csv` output for `file_name`, skipping properties that
/// are assumed rather than proved.
fn csv_properties(csv: &str, file_name: &str) -> Vec<GoalResult> {
    let mut reader = csv::ReaderBuilder::new().delimiter(b'\t').flexible(true).from_reader(csv.as_bytes());
    let mut goals = Vec::new();
    for record in reader.records().flatten() {
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        if field(1) != file_name {
            continue;
        }
        let Ok(line) = field(2).parse::<u32>() else { continue };
        let status = field(5).to_ascii_lowercase();
        let status = if status.starts_with("valid") {
            GoalStatus::Proved
        } else if status.starts_with("considered valid") || status.is_empty() {
            continue;
        } else {
            GoalStatus::Unknown
        };
        let name = format!("{}_{}_line_{line}", field(3), field(4).replace(' ', "_"));
        goals.push(GoalResult::new(name, status).at_line(line));
    }
    goals
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_console_goal_lines() {
        let out = "[kernel] Parsing id.c (with preprocessing)\n[wp] Running WP plugin...\n[wp] [Valid] typed_id_assigns (Qed)\n[wp] [Timeout] typed_id_ensures (Alt-Ergo 10s)\n[wp] Goal typed_lemma_step : Unknown\n[wp] Proved goals:    1 / 3\n";
        let goals = parse_framac_output(out, None, "id.c");
        let got: Vec<_> = goals.iter().map(|g| (g.goal_name.as_str(), g.status)).collect();
        assert_eq!(
            got,
            [
                ("typed_id_assigns", GoalStatus::Proved),
                ("typed_id_ensures", GoalStatus::Timeout),
                ("typed_lemma_step", GoalStatus::Unknown)
            ]
        );
    }

    #[test]
    fn parses_csv_report() {
        let csv = "directory\tfile\tline\tfunction\tproperty kind\tstatus\tproperty\n\
                   .\tid.c\t2\tid\tpostcondition\tValid\tensures \\result == x\n\
                   .\tid.c\t3\tid\tpostcondition\tUnknown\tensures x > 0\n\
                   .\tid.c\t1\t\taxiom\tConsidered valid\tax\n\
                   .\tlib.h\t9\tg\tpostcondition\tUnknown\tother\n";
        let goals = parse_framac_output("", Some(csv), "id.c");
        assert_eq!(goals.len(), 2);
        assert_eq!(goals[0].status, GoalStatus::Proved);
        assert_eq!(goals[1].line, Some(3));
        assert_eq!(goals[1].status, GoalStatus::Unknown);
    }

    #[test]
    fn kernel_errors_become_goals_at_their_line() {
        let out = "[kernel] Parsing id.c (with preprocessing)\n[kernel] id.c:4: user error: unbound logic variable y\n[kernel] User Error: stopping on file \"id.c\" that has errors.\n";
        let goals = parse_framac_output(out, None, "id.c");
        assert_eq!(goals.len(), 1);
        assert_eq!(goals[0].line, Some(4));
    }

    #[test]
    fn missing_executable_is_reported() {
        let settings = FramaCSettings { executable: "/nonexistent/frama-c".into(), ..Default::default() };
        assert!(matches!(FramaC::new(settings), Err(VerifierError::VerifierNotInstalled(_))));
    }
}
