//! Experiment engine: configuration, solved-task cache, trials, sweeps,
//! summaries and file outputs.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::atpo::AtpoError;
use crate::baselines::AgentError;
use crate::environments::EnvError;
use crate::error::{ModelError, SolveError};

pub mod config;
pub mod experiment;
pub mod library;
pub mod summary;
pub mod trial;

pub use config::{
    DomainSpec, ExperimentConfig, SolverConfig, SweepAxis, SweepSpec, TargetSpec, TaskSpec,
};
pub use experiment::{
    bound_check, bound_check_lines, export, load_results, run_experiment, solve_only,
    write_outputs, BoundCheckReport, ExperimentResult, PointSetup, ResultsFile, TaskSetup,
    TraceLine,
};
pub use library::{
    cache_key, cache_paths, resolve_points, solve_library, Point, SolvedLibrary, SolvedTask,
    TaskDef,
};
pub use summary::{
    entropy_curves, mean_ci, summarize, EntropyCurve, Stat, SummaryRow, SummaryTable,
};
pub use trial::{
    make_agent, run_trial, trial_seed, TrialOutput, TrialRecord, TrialTiming, AGENT_STREAM,
    ENV_STREAM,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Atpo(#[from] AtpoError),
}

impl HarnessError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}
