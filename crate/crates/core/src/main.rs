//! Command-line entry point: run experiments, build reports, inspect files.

use std::error::Error;
use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use acsl_harness::acsl::{constr, parse_annotations};
use acsl_harness::config::{canonical_config, check_compliance, TemplateStore, CANONICAL_NAMES};
use acsl_harness::dataset::load_dataset;
use acsl_harness::metrics::write_reports;
use acsl_harness::oracle::{HttpOracle, HttpOracleSettings, Oracle, ReplayOracle};
use acsl_harness::refine::{Paradigm, RunLimits, TimeSource};
use acsl_harness::runner::{has_infrastructure_errors, load_records, run_experiment, ExperimentPlan, RunOptions};
use acsl_harness::verifier::{FramaC, FramaCSettings, MockTable, MockVerifier, Verifier};

#[derive(Parser)]
#[command(name = "acsl-harness", version, about = "Generate, verify and refine ACSL specifications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifierKind {
    Framac,
    Mock,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run the experiment grid and write records into the output directory.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = CANONICAL_NAMES.map(String::from))]
        configs: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values = ["deletion", "modification"])]
        paradigms: Vec<Paradigm>,
        #[arg(long, default_value_t = 5)]
        runs: u32,
        /// Persona label; with --replay-dir it also names the fixture directory.
        #[arg(long)]
        oracle: String,
        #[arg(long, value_enum, default_value = "framac")]
        verifier: VerifierKind,
        #[arg(long, default_value_t = 5)]
        max_iters: u32,
        #[arg(long)]
        out: PathBuf,
        /// Replay recorded completions instead of calling an endpoint.
        #[arg(long)]
        replay_dir: Option<PathBuf>,
        /// Latency reported by the replay oracle, in seconds.
        #[arg(long, default_value_t = 0.0)]
        replay_latency: f64,
        #[arg(long)]
        mock_table: Option<PathBuf>,
        /// Directory with `<CONFIG>-<phase>.txt` template overrides.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        verifier_jobs: Option<usize>,
        /// Measure run time as reported latencies instead of wall clock.
        #[arg(long)]
        simulated_time: bool,
        #[arg(long, default_value = "frama-c")]
        frama_c: PathBuf,
        #[arg(long, default_value_t = 10)]
        prover_timeout: u32,
        /// Per-run wall-clock budget in seconds.
        #[arg(long, default_value_t = 3600.0)]
        wall_budget: f64,
        /// TOML settings for the HTTP oracle.
        #[arg(long)]
        oracle_config: Option<PathBuf>,
        /// Stop after this many new records.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Compute metrics and write report files from one or more records files.
    Report {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Personas listed in the table but left out of the Average rows.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
    },
    /// Print the annotations of an annotated C file and their compliance.
    Inspect {
        file: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Box<dyn Error>> {
    match command {
        Command::Run {
            dataset,
            configs,
            paradigms,
            runs,
            oracle,
            verifier,
            max_iters,
            out,
            replay_dir,
            replay_latency,
            mock_table,
            templates,
            workers,
            verifier_jobs,
            simulated_time,
            frama_c,
            prover_timeout,
            wall_budget,
            oracle_config,
            limit,
        } => {
            let corpus = load_dataset(&dataset)?;
            let configs = configs.iter().map(|c| canonical_config(c)).collect::<Result<Vec<_>, _>>()?;
            let templates = match templates {
                Some(dir) => TemplateStore::with_overrides(&dir)?,
                None => TemplateStore::builtin(),
            };
            let oracle_impl: Box<dyn Oracle> = match replay_dir {
                Some(dir) => Box::new(ReplayOracle::new(&dir, &oracle)?.with_latency(replay_latency)),
                None => {
                    let mut settings = HttpOracleSettings::load(oracle_config.as_deref())?;
                    if settings.model.is_empty() {
                        settings.model = oracle.clone();
                    }
                    Box::new(HttpOracle::new(settings)?)
                }
            };
            let (verifier_impl, verifier_id): (Box<dyn Verifier>, &str) = match verifier {
                VerifierKind::Framac => {
                    let settings = FramaCSettings {
                        executable: frama_c,
                        prover_timeout,
                        ..FramaCSettings::default()
                    };
                    (Box::new(FramaC::new(settings)?), "frama-c")
                }
                VerifierKind::Mock => {
                    let table = match mock_table {
                        Some(path) => MockTable::load(&path)?,
                        None => MockTable::default(),
                    };
                    (Box::new(MockVerifier::new(table)), "mock")
                }
            };
            let mut plan = ExperimentPlan::new(configs, paradigms, &oracle, verifier_id);
            plan.runs_per_cell = runs;
            plan.limits = RunLimits {
                max_repair_iterations: max_iters,
                wall_budget,
                time_source: if simulated_time { TimeSource::Simulated } else { TimeSource::Wall },
            };
            if let Some(n) = workers {
                plan.workers = n;
            }
            if let Some(n) = verifier_jobs {
                plan.verifier_jobs = n;
            }
            let outcome = run_experiment(
                &plan,
                &corpus,
                oracle_impl.as_ref(),
                verifier_impl.as_ref(),
                &templates,
                &out,
                &RunOptions { max_new_records: limit },
            )?;
            println!("{} records ({} new) in {}", outcome.records.len(), outcome.new_records, out.display());
            if has_infrastructure_errors(&outcome.records) {
                eprintln!("some runs failed because of verifier or oracle infrastructure errors");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { records, out, exclude } => {
            let mut all = Vec::new();
            for path in &records {
                all.extend(load_records(path)?);
            }
            let summary = write_reports(&all, &out, &exclude)?;
            print!("{}", acsl_harness::metrics::render_table(&summary.table));
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { file } => {
            let text = std::fs::read_to_string(&file)?;
            let spec = parse_annotations(&text)?;
            for a in spec.iter() {
                println!("{:<14} {:<40} {}", format!("{:?}", a.kind), a.anchor.to_string(), a.text);
            }
            let kinds: Vec<String> = constr(&spec).iter().map(|k| format!("{k:?}")).collect();
            println!("\nconstructs: {}", kinds.join(", "));
            for name in CANONICAL_NAMES {
                let verdict = check_compliance(&spec, &canonical_config(name)?);
                println!("{name}: {}", if verdict.compliant { "compliant" } else { "not compliant" });
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
