//! Aggregate metrics over run records: compliance rate, verified program
//! counts, tool calls and run time per cell, plus the derived comparisons
//! (reduction rate, improvement ratio, Venn regions, optimal configuration
//! proportions) and their report files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::refine::{Outcome, Paradigm, RunRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("incomplete grid: {0}")]
    IncompleteGrid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Records of one (persona, configuration, paradigm) cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub persona: String,
    pub config_name: String,
    pub paradigm: Paradigm,
}

pub fn group_cells(records: &[RunRecord]) -> BTreeMap<CellKey, Vec<&RunRecord>> {
    let mut cells: BTreeMap<CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = CellKey { persona: r.persona.clone(), config_name: r.config_name.clone(), paradigm: r.paradigm };
        cells.entry(key).or_default().push(r);
    }
    cells
}

/// Programs and run indices of a cell, after checking that every
/// (program, run) pair occurs exactly once.
pub fn grid(records: &[&RunRecord]) -> Result<(BTreeSet<String>, BTreeSet<u32>), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::IncompleteGrid("no records".into()));
    }
    let programs: BTreeSet<String> = records.iter().map(|r| r.program_id.clone()).collect();
    let runs: BTreeSet<u32> = records.iter().map(|r| r.run_index).collect();
    let pairs: BTreeSet<(&str, u32)> = records.iter().map(|r| (r.program_id.as_str(), r.run_index)).collect();
    if pairs.len() != records.len() {
        return Err(MetricsError::IncompleteGrid("duplicate (program, run) records".into()));
    }
    if pairs.len() != programs.len() * runs.len() {
        return Err(MetricsError::IncompleteGrid(format!(
            "{} of {} (program, run) pairs present",
            pairs.len(),
            programs.len() * runs.len()
        )));
    }
    Ok((programs, runs))
}

/// Share of compliant samples (program x run).
pub fn csccr(records: &[&RunRecord]) -> Result<f64, MetricsError> {
    grid(records)?;
    Ok(records.iter().filter(|r| r.compliant).count() as f64 / records.len() as f64)
}

/// Share of programs whose proposals were compliant in every run.
pub fn csccr_per_program(records: &[&RunRecord]) -> Result<f64, MetricsError> {
    let (programs, _) = grid(records)?;
    let bad: BTreeSet<&str> = records.iter().filter(|r| !r.compliant).map(|r| r.program_id.as_str()).collect();
    Ok((programs.len() - bad.len()) as f64 / programs.len() as f64)
}

fn verified_runs(records: &[&RunRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.program_id.clone()).or_insert(0) += usize::from(r.outcome == Outcome::Verified);
    }
    counts
}

/// Programs verified in at least one run.
pub fn verified_program_set(records: &[&RunRecord]) -> Result<BTreeSet<String>, MetricsError> {
    grid(records)?;
    Ok(verified_runs(records).into_iter().filter(|(_, n)| *n >= 1).map(|(p, _)| p).collect())
}

pub fn nvp(records: &[&RunRecord]) -> Result<usize, MetricsError> {
    Ok(verified_program_set(records)?.len())
}

/// Programs verified in at least two runs.
pub fn nsvp(records: &[&RunRecord]) -> Result<usize, MetricsError> {
    grid(records)?;
    Ok(verified_runs(records).values().filter(|n| **n >= 2).count())
}

/// Mean over runs of the per-run sum of `field` over all programs.
fn mean_run_total(records: &[&RunRecord], field: impl Fn(&RunRecord) -> f64) -> Result<f64, MetricsError> {
    let (_, runs) = grid(records)?;
    let total: f64 = records.iter().map(|r| field(r)).sum();
    Ok(total / runs.len() as f64)
}

pub fn nvtc(records: &[&RunRecord]) -> Result<f64, MetricsError> {
    mean_run_total(records, |r| f64::from(r.tool_calls))
}

pub fn rt(records: &[&RunRecord]) -> Result<f64, MetricsError> {
    mean_run_total(records, |r| r.elapsed)
}

/// `(nvp - nsvp) / nvp`, or 0 when nothing verified.
pub fn reduction_rate(nvp: f64, nsvp: f64) -> f64 {
    if nvp > 0.0 {
        (nvp - nsvp) / nvp
    } else {
        0.0
    }
}

/// `(modify - delete) / delete`; undefined when `delete` is 0.
pub fn improvement_ratio(modify_value: f64, delete_value: f64) -> Option<f64> {
    (delete_value != 0.0).then(|| (modify_value - delete_value) / delete_value)
}

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub persona: String,
    pub config_name: String,
    pub paradigm: Paradigm,
    pub programs: usize,
    pub runs: usize,
    pub csccr: f64,
    pub csccr_per_program: f64,
    pub nvp: usize,
    pub nsvp: usize,
    pub nvtc: f64,
    pub rt: f64,
    pub reduction_rate: f64,
    /// Samples whose run ended in an error.
    pub errored: usize,
    pub verified_program_set: BTreeSet<String>,
}

pub fn cell_metrics(key: &CellKey, records: &[&RunRecord]) -> Result<CellMetrics, MetricsError> {
    let (programs, runs) = grid(records)?;
    let nvp = nvp(records)?;
    let nsvp = nsvp(records)?;
    Ok(CellMetrics {
        persona: key.persona.clone(),
        config_name: key.config_name.clone(),
        paradigm: key.paradigm,
        programs: programs.len(),
        runs: runs.len(),
        csccr: csccr(records)?,
        csccr_per_program: csccr_per_program(records)?,
        nvp,
        nsvp,
        nvtc: nvtc(records)?,
        rt: rt(records)?,
        reduction_rate: reduction_rate(nvp as f64, nsvp as f64),
        errored: records.iter().filter(|r| r.outcome == Outcome::Errored).count(),
        verified_program_set: verified_program_set(records)?,
    })
}

/// Region `members` holds the programs verified under exactly those
/// configurations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VennRegion {
    pub members: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VennData {
    pub persona: String,
    pub paradigm: Paradigm,
    pub sets: BTreeMap<String, BTreeSet<String>>,
    pub regions: Vec<VennRegion>,
}

fn cell_records<'a>(records: &'a [RunRecord], persona: &str, paradigm: Paradigm, config: &str) -> Vec<&'a RunRecord> {
    records
        .iter()
        .filter(|r| r.persona == persona && r.paradigm == paradigm && r.config_name == config)
        .collect()
}

/// Exclusive region sizes of the verified program sets of `configs`.
pub fn venn_sets(
    records: &[RunRecord],
    persona: &str,
    paradigm: Paradigm,
    configs: &[&str],
) -> Result<VennData, MetricsError> {
    let mut sets = BTreeMap::new();
    let mut ordered = Vec::new();
    for c in configs {
        let set = verified_program_set(&cell_records(records, persona, paradigm, c))
            .map_err(|e| MetricsError::IncompleteGrid(format!("{c}: {e}")))?;
        ordered.push(set.clone());
        sets.insert(c.to_string(), set);
    }
    let union: BTreeSet<&String> = ordered.iter().flatten().collect();
    let mut counts = vec![0usize; 1 << configs.len()];
    for p in union {
        let mask = ordered.iter().enumerate().filter(|(_, s)| s.contains(p)).fold(0, |m, (i, _)| m | (1 << i));
        counts[mask] += 1;
    }
    let regions = (1..counts.len())
        .map(|mask| VennRegion {
            members: configs.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| c.to_string()).collect(),
            count: counts[mask],
        })
        .collect();
    Ok(VennData { persona: persona.to_string(), paradigm, sets, regions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMetric {
    Nvtc,
    Rt,
}

/// For each program, the configuration with the smallest mean cost over its
/// runs wins; ties share the program equally. Returns each configuration's
/// share of the programs.
pub fn optimal_config_proportions(
    records: &[RunRecord],
    persona: &str,
    paradigm: Paradigm,
    configs: &[&str],
    metric: CostMetric,
) -> Result<BTreeMap<String, f64>, MetricsError> {
    let mut per_config: Vec<BTreeMap<String, f64>> = Vec::new();
    let mut programs: Option<BTreeSet<String>> = None;
    for c in configs {
        let cell = cell_records(records, persona, paradigm, c);
        let (progs, runs) = grid(&cell).map_err(|e| MetricsError::IncompleteGrid(format!("{c}: {e}")))?;
        if programs.as_ref().is_some_and(|p| *p != progs) {
            return Err(MetricsError::IncompleteGrid(format!("{c}: different program set")));
        }
        let mut means: BTreeMap<String, f64> = BTreeMap::new();
        for r in &cell {
            let cost = match metric {
                CostMetric::Nvtc => f64::from(r.tool_calls),
                CostMetric::Rt => r.elapsed,
            };
            *means.entry(r.program_id.clone()).or_insert(0.0) += cost;
        }
        means.values_mut().for_each(|v| *v /= runs.len() as f64);
        per_config.push(means);
        programs = Some(progs);
    }
    let programs = programs.unwrap_or_default();
    let mut shares = vec![0.0; configs.len()];
    for p in &programs {
        let costs: Vec<f64> = per_config.iter().map(|m| m[p]).collect();
        let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let winners: Vec<usize> = (0..costs.len()).filter(|&i| costs[i] <= best + 1e-9 * best.abs().max(1.0)).collect();
        for &w in &winners {
            shares[w] += 1.0 / winners.len() as f64;
        }
    }
    let n = programs.len().max(1) as f64;
    Ok(configs.iter().zip(shares).map(|(c, s)| (c.to_string(), s / n)).collect())
}

/// The four values a Table-1-style row shows per configuration.
pub const TABLE_COLUMNS: [&str; 4] = ["NVP", "NSVP", "NVTC", "VT"];

pub fn table_values(m: &CellMetrics) -> [f64; 4] {
    [m.nvp as f64, m.nsvp as f64, m.nvtc, m.rt]
}

/// Column-wise arithmetic mean of per-persona rows.
pub fn average_row(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
}

/// Sample counts by compliance and final verification result.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    pub compliant_verified: usize,
    pub compliant_failed: usize,
    pub noncompliant_verified: usize,
    pub noncompliant_failed: usize,
}

pub fn distribution(records: &[&RunRecord]) -> Distribution {
    let mut d = Distribution::default();
    for r in records {
        let slot = match (r.compliant, r.outcome == Outcome::Verified) {
            (true, true) => &mut d.compliant_verified,
            (true, false) => &mut d.compliant_failed,
            (false, true) => &mut d.noncompliant_verified,
            (false, false) => &mut d.noncompliant_failed,
        };
        *slot += 1;
    }
    d
}

/// Table-1-style layout: one block per paradigm, a row per persona, an
/// Average row, then improvement ratios of modification over deletion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub configs: Vec<String>,
    pub personas: Vec<String>,
    /// Personas listed but left out of the Average rows.
    pub excluded_from_average: Vec<String>,
    /// paradigm -> persona -> values (4 per config; NaN when the cell is missing).
    pub rows: BTreeMap<Paradigm, BTreeMap<String, Vec<f64>>>,
    pub averages: BTreeMap<Paradigm, Vec<f64>>,
    /// Improvement of the modification Average over the deletion Average.
    pub improvement: Option<Vec<Option<f64>>>,
}

pub fn build_table(metrics: &[CellMetrics], configs: &[String], excluded: &[String]) -> Table {
    let personas: Vec<String> = metrics.iter().map(|m| m.persona.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut rows: BTreeMap<Paradigm, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for paradigm in Paradigm::ALL {
        for persona in &personas {
            let mut row = Vec::new();
            let mut any = false;
            for c in configs {
                match metrics.iter().find(|m| m.paradigm == paradigm && &m.persona == persona && &m.config_name == c) {
                    Some(m) => {
                        row.extend(table_values(m));
                        any = true;
                    }
                    None => row.extend([f64::NAN; 4]),
                }
            }
            if any {
                rows.entry(paradigm).or_default().insert(persona.clone(), row);
            }
        }
    }
    let averages: BTreeMap<Paradigm, Vec<f64>> = rows
        .iter()
        .map(|(p, by_persona)| {
            let included: Vec<Vec<f64>> =
                by_persona.iter().filter(|(name, _)| !excluded.contains(name)).map(|(_, r)| r.clone()).collect();
            (*p, average_row(&included))
        })
        .collect();
    let improvement = match (averages.get(&Paradigm::Deletion), averages.get(&Paradigm::Modification)) {
        (Some(d), Some(m)) => Some(
            m.iter().zip(d).map(|(m, d)| improvement_ratio(*m, *d).filter(|v| v.is_finite())).collect(),
        ),
        _ => None,
    };
    Table {
        configs: configs.to_vec(),
        personas,
        excluded_from_average: excluded.to_vec(),
        rows,
        averages,
        improvement,
    }
}

fn fmt_value(column: usize, v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if column % 4 < 2 && v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn render_table(table: &Table) -> String {
    let width = 10;
    let name_width = table.personas.iter().map(String::len).chain(["Improvement Ratio".len()]).max().unwrap_or(8) + 2;
    let mut out = String::new();
    let rule = "-".repeat(name_width + width * 4 * table.configs.len());
    let mut header = format!("{:<name_width$}", "");
    for c in &table.configs {
        header.push_str(&format!("{:^w$}", c, w = width * 4));
    }
    let mut sub = format!("{:<name_width$}", "");
    for _ in &table.configs {
        for col in TABLE_COLUMNS {
            sub.push_str(&format!("{col:>width$}"));
        }
    }
    for (paradigm, by_persona) in &table.rows {
        let _ = writeln!(out, "{} paradigm", capitalized(paradigm.as_str()));
        let _ = writeln!(out, "{header}\n{sub}\n{rule}");
        for (persona, row) in by_persona {
            let mark = if table.excluded_from_average.contains(persona) { "*" } else { "" };
            let _ = write!(out, "{:<name_width$}", format!("{persona}{mark}"));
            for (j, v) in row.iter().enumerate() {
                let _ = write!(out, "{:>width$}", fmt_value(j, *v));
            }
            out.push('\n');
        }
        if let Some(avg) = table.averages.get(paradigm) {
            let _ = write!(out, "{:<name_width$}", "Average");
            for v in avg {
                let _ = write!(out, "{:>width$}", if v.is_nan() { "-".to_string() } else { format!("{v:.2}") });
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{rule}\n");
    }
    if let Some(imp) = &table.improvement {
        let _ = write!(out, "{:<name_width$}", "Improvement Ratio");
        for v in imp {
            let cell = v.map_or("-".to_string(), |v| format!("{:.2}%", v * 100.0));
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    if !table.excluded_from_average.is_empty() {
        let _ = writeln!(out, "\n* not included in the Average rows");
    }
    out
}

fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalProportions {
    pub persona: String,
    pub paradigm: Paradigm,
    pub metric: CostMetric,
    pub proportions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellMetrics>,
    pub table: Table,
}

fn rounded(m: &CellMetrics) -> CellMetrics {
    CellMetrics {
        csccr: round4(m.csccr),
        csccr_per_program: round4(m.csccr_per_program),
        reduction_rate: round4(m.reduction_rate),
        nvtc: round4(m.nvtc),
        rt: round4(m.rt),
        ..m.clone()
    }
}

/// Metrics for every complete cell; incomplete cells are skipped with a
/// warning.
pub fn all_cell_metrics(records: &[RunRecord]) -> Vec<CellMetrics> {
    group_cells(records)
        .iter()
        .filter_map(|(key, recs)| match cell_metrics(key, recs) {
            Ok(m) => Some(m),
            Err(e) => {
                tracing::warn!(persona = %key.persona, config = %key.config_name, paradigm = %key.paradigm, error = %e, "skipping cell");
                None
            }
        })
        .collect()
}

const VENN_CONFIGS: [&str; 3] = ["CB", "CV", "CA"];

/// Writes summary.json, table.txt, venn.json, optimal_nvtc.json,
/// optimal_rt.json and distribution.json into `out_dir`.
pub fn write_reports(records: &[RunRecord], out_dir: &Path, excluded: &[String]) -> Result<Summary, MetricsError> {
    let io = |path: &Path, e: std::io::Error| MetricsError::Io { path: path.display().to_string(), message: e.to_string() };
    std::fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let cells: Vec<CellMetrics> = all_cell_metrics(records).iter().map(rounded).collect();
    let mut configs: Vec<String> = cells.iter().map(|c| c.config_name.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    configs.sort_by_key(|c| (["CB", "CV", "CA", "CF"].iter().position(|k| k == c).unwrap_or(usize::MAX), c.clone()));
    let table = build_table(&cells, &configs, excluded);
    let summary = Summary { cells, table };

    let groups: BTreeSet<(String, Paradigm)> = summary.cells.iter().map(|c| (c.persona.clone(), c.paradigm)).collect();
    let mut venn = Vec::new();
    let mut optimal_nvtc = Vec::new();
    let mut optimal_rt = Vec::new();
    for (persona, paradigm) in &groups {
        let present: Vec<&str> = VENN_CONFIGS
            .iter()
            .copied()
            .filter(|c| summary.cells.iter().any(|m| &m.persona == persona && m.paradigm == *paradigm && m.config_name == *c))
            .collect();
        if present.len() < 2 {
            continue;
        }
        if let Ok(v) = venn_sets(records, persona, *paradigm, &present) {
            venn.push(v);
        }
        for (metric, sink) in [(CostMetric::Nvtc, &mut optimal_nvtc), (CostMetric::Rt, &mut optimal_rt)] {
            if let Ok(p) = optimal_config_proportions(records, persona, *paradigm, &present, metric) {
                let proportions = p.into_iter().map(|(k, v)| (k, round4(v))).collect();
                sink.push(OptimalProportions { persona: persona.clone(), paradigm: *paradigm, metric, proportions });
            }
        }
    }
    let distributions: Vec<serde_json::Value> = group_cells(records)
        .iter()
        .map(|(key, recs)| serde_json::json!({ "cell": key, "distribution": distribution(recs) }))
        .collect();

    let files = [
        ("summary.json", serde_json::to_value(&summary)),
        ("venn.json", serde_json::to_value(&venn)),
        ("optimal_nvtc.json", serde_json::to_value(&optimal_nvtc)),
        ("optimal_rt.json", serde_json::to_value(&optimal_rt)),
        ("distribution.json", serde_json::to_value(&distributions)),
    ];
    for (name, value) in files {
        let path = out_dir.join(name);
        let text = serde_json::to_string_pretty(&value.expect("report values serialize")).expect("json values serialize");
        std::fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    }
    let table_path = out_dir.join("table.txt");
    std::fs::write(&table_path, render_table(&summary.table)).map_err(|e| io(&table_path, e))?;
    Ok(summary)
}
