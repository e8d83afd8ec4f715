//! Runs whole experiments (every sweep point, agent, target and trial) and
//! reads and writes their output directories.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::info;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TargetSpec};
use super::library::{resolve_points, solve_library, Point, SolvedLibrary};
use super::summary::{
    entropy_csv, entropy_curves, summarize, summary_csv, trials_csv, EntropyCurve, SummaryTable,
};
use super::trial::{run_trial, TrialRecord, TrialTiming};
use super::HarnessError;
use crate::atpo::{verify_bound, TaskPosterior, TraceRecord};
use crate::environments::DISCOUNT;
use crate::sampling::{derive_seed, rng_from_seed};

const TARGET_STREAM: u64 = 2;

pub const RESULTS_FILE: &str = "results.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const TRIALS_CSV: &str = "trials.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const ENTROPY_CSV: &str = "entropy.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSetup {
    pub label: String,
    pub setup_seconds: f64,
    pub from_cache: bool,
    pub perseus_rounds: usize,
    pub perseus_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSetup {
    pub point: usize,
    pub axis_value: Option<f64>,
    pub cache_key: String,
    pub tasks: Vec<TaskSetup>,
}

/// One line of `traces.jsonl`: an ATPO trace with what is needed to
/// re-evaluate its regret bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub point: usize,
    pub target: usize,
    pub trial: usize,
    pub r_max: f64,
    pub discount: f64,
    pub trace: TraceRecord,
}

/// The deterministic part of an experiment, stored as `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TimingsFile {
    setup: Vec<PointSetup>,
    trials: Vec<TrialTiming>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub setup: Vec<PointSetup>,
    pub records: Vec<TrialRecord>,
    pub traces: Vec<TraceLine>,
    pub timings: Vec<TrialTiming>,
    pub summary: SummaryTable,
    pub entropy: Vec<EntropyCurve>,
}

fn point_setup(point: &Point, lib: &SolvedLibrary) -> PointSetup {
    PointSetup {
        point: point.index,
        axis_value: point.axis_value,
        cache_key: lib.cache_key.clone(),
        tasks: lib
            .tasks
            .iter()
            .map(|t| TaskSetup {
                label: t.built.label.clone(),
                setup_seconds: t.setup_seconds,
                from_cache: t.from_cache,
                perseus_rounds: t.perseus_rounds,
                perseus_converged: t.perseus_converged,
            })
            .collect(),
    }
}

/// `(target, trial)` pairs of one sweep point.
fn targets(cfg: &ExperimentConfig, point: usize, k: usize) -> Vec<(usize, usize)> {
    match cfg.target {
        TargetSpec::EachTask => (0..k)
            .flat_map(|m| (0..cfg.trials()).map(move |i| (m, i)))
            .collect(),
        TargetSpec::RandomFromLibrary => (0..cfg.trials())
            .map(|i| {
                let mut rng = rng_from_seed(derive_seed(&[
                    cfg.seed,
                    point as u64,
                    i as u64,
                    TARGET_STREAM,
                ]));
                (rng.gen_range(0..k), i)
            })
            .collect(),
    }
}

/// Builds and solves every point's library without running trials.
pub fn solve_only(
    cfg: &ExperimentConfig,
    with_sweep: bool,
    cache_dir: Option<&Path>,
) -> Result<Vec<PointSetup>, HarnessError> {
    resolve_points(cfg, with_sweep)?
        .iter()
        .map(|p| {
            Ok(point_setup(
                p,
                &solve_library(&p.domain, &p.tasks, &cfg.solver, cache_dir)?,
            ))
        })
        .collect()
}

/// Runs the experiment. Points are processed in order; trials of a point run
/// in parallel and are collected in job order, so results do not depend on
/// the thread count.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    with_sweep: bool,
    cache_dir: Option<&Path>,
) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let mut setup = Vec::new();
    let mut records = Vec::new();
    let mut traces = Vec::new();
    let mut timings = Vec::new();
    for point in resolve_points(cfg, with_sweep)? {
        let lib = solve_library(&point.domain, &point.tasks, &cfg.solver, cache_dir)?;
        setup.push(point_setup(&point, &lib));
        let jobs: Vec<(&str, usize, usize)> = cfg
            .agents
            .iter()
            .flat_map(|a| {
                targets(cfg, point.index, lib.tasks.len())
                    .into_iter()
                    .map(move |(m, i)| (a.as_str(), m, i))
            })
            .collect();
        info!(
            "point {}: {} trials over {} tasks",
            point.index,
            jobs.len(),
            lib.tasks.len()
        );
        let outputs = jobs
            .par_iter()
            .map(|&(agent, m, i)| {
                run_trial(cfg, &hash, point.index, point.axis_value, &lib, agent, m, i)
            })
            .collect::<Result<Vec<_>, _>>()?;
        for out in outputs {
            if let Some(trace) = out.trace {
                traces.push(TraceLine {
                    point: point.index,
                    target: out.record.target,
                    trial: out.record.trial,
                    r_max: lib.r_max,
                    discount: DISCOUNT,
                    trace,
                });
            }
            records.push(out.record);
            timings.push(out.timing);
        }
    }
    let summary = summarize(&records);
    let entropy = entropy_curves(&records);
    Ok(ExperimentResult {
        config: cfg.clone(),
        config_hash: hash,
        setup,
        records,
        traces,
        timings,
        summary,
        entropy,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn write_tables(dir: &Path, records: &[TrialRecord]) -> Result<(), HarnessError> {
    write(&dir.join(TRIALS_CSV), trials_csv(records))?;
    write(&dir.join(SUMMARY_CSV), summary_csv(&summarize(records)))?;
    write(
        &dir.join(ENTROPY_CSV),
        entropy_csv(&entropy_curves(records)),
    )
}

/// Writes `results.json`, `traces.jsonl`, the three CSV tables and
/// `timings.json` (the only file with wall-clock values).
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let results = ResultsFile {
        config_hash: result.config_hash.clone(),
        config: result.config.clone(),
        records: result.records.clone(),
    };
    write(
        &dir.join(RESULTS_FILE),
        serde_json::to_vec_pretty(&results)?,
    )?;
    let mut lines = String::new();
    for t in &result.traces {
        lines.push_str(&serde_json::to_string(t)?);
        lines.push('\n');
    }
    write(&dir.join(TRACES_FILE), lines)?;
    write_tables(dir, &result.records)?;
    let timings = TimingsFile {
        setup: result.setup.clone(),
        trials: result.timings.clone(),
    };
    write(
        &dir.join(TIMINGS_FILE),
        serde_json::to_vec_pretty(&timings)?,
    )
}

/// Reads `results.json` from a run directory (or the file itself).
pub fn load_results(path: &Path) -> Result<ResultsFile, HarnessError> {
    let file = if path.is_dir() {
        path.join(RESULTS_FILE)
    } else {
        path.to_path_buf()
    };
    let bytes = fs::read(&file).map_err(|e| HarnessError::io(&file, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Rewrites the CSV tables of a finished run into `out_dir`, plus one
/// per-step CSV per stored trace under `traces/`. Returns the number of
/// trial rows written.
pub fn export(run_dir: &Path, out_dir: &Path) -> Result<usize, HarnessError> {
    let results = load_results(run_dir)?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    write_tables(out_dir, &results.records)?;
    let traces_path = run_dir.join(TRACES_FILE);
    if traces_path.is_file() {
        let dir = out_dir.join("traces");
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for line in read_traces(&traces_path)? {
            let name = format!("p{}-m{}-t{}.csv", line.point, line.target, line.trial);
            write(&dir.join(name), line.trace.to_csv())?;
        }
    }
    Ok(results.records.len())
}

fn read_traces(path: &Path) -> Result<Vec<TraceLine>, HarnessError> {
    let f = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub traces: usize,
    pub holds_target: usize,
    pub holds_uniform: usize,
    /// `(point, target, trial)` of traces where either bound fails.
    pub failures: Vec<(usize, usize, usize)>,
}

impl BoundCheckReport {
    pub fn all_hold(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn bound_check_lines(lines: &[TraceLine]) -> BoundCheckReport {
    let mut report = BoundCheckReport {
        traces: lines.len(),
        holds_target: 0,
        holds_uniform: 0,
        failures: Vec::new(),
    };
    for l in lines {
        let k = l.trace.labels.len();
        let target = verify_bound(
            &l.trace,
            &TaskPosterior::point(k, l.target),
            l.r_max,
            l.discount,
        )
        .holds;
        let uniform = verify_bound(&l.trace, &TaskPosterior::uniform(k), l.r_max, l.discount).holds;
        report.holds_target += usize::from(target);
        report.holds_uniform += usize::from(uniform);
        if !(target && uniform) {
            report.failures.push((l.point, l.target, l.trial));
        }
    }
    report
}

/// Re-evaluates the regret bound on the traces stored in a run directory
/// (or a `traces.jsonl` file).
pub fn bound_check(path: &Path) -> Result<BoundCheckReport, HarnessError> {
    let file = if path.is_dir() {
        path.join(TRACES_FILE)
    } else {
        path.to_path_buf()
    };
    Ok(bound_check_lines(&read_traces(&file)?))
}
