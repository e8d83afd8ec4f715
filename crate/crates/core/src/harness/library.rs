//! Task resolution and solving, with an on-disk cache of solver output.
//!
//! Layout: `<cache>/<hash>/<label>.model` and `<label>.policy`, both JSON
//! documents carrying [`CACHE_VERSION`]. The hash covers the domain
//! parameters and the solver settings, so a task's files are reused by any
//! library that contains it.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{
    grid_side_for_states, hash_json, DomainSpec, ExperimentConfig, SolverConfig, SweepAxis,
    TaskSpec,
};
use super::HarnessError;
use crate::atpo::{Task, TaskLibrary};
use crate::decision::{greedy_policy, value_iteration, ResponsivePolicy, StatePolicy, TieBreak};
use crate::environments::night_pursuit::all_prey_pairs;
use crate::environments::{BuiltTask, EnvError, NightPursuitTask, OvercookedTask, PursuitPoTask};
use crate::pomdp::{AlphaVectorPolicy, PerseusConfig, TabularPOMDP};
use crate::sampling::{derive_seed, rng_from_seed};

pub const CACHE_VERSION: u32 = 1;

const POOL_STREAM: u64 = 0x706f_6f6c;
const LIBRARY_STREAM: u64 = 0x6c69_6272;

/// One concrete task of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskDef {
    NightPursuit(NightPursuitTask),
    PursuitPo(PursuitPoTask),
    Overcooked(OvercookedTask),
}

impl TaskDef {
    pub fn label(&self) -> String {
        match self {
            TaskDef::NightPursuit(t) => t.label(),
            TaskDef::PursuitPo(t) => t.label(),
            TaskDef::Overcooked(t) => t.label(),
        }
    }

    pub fn build(&self) -> Result<BuiltTask, EnvError> {
        match self {
            TaskDef::NightPursuit(t) => t.build(),
            TaskDef::PursuitPo(t) => t.build(),
            TaskDef::Overcooked(t) => t.build(),
        }
    }
}

/// One setting of the sweep axis with its resolved library.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub index: usize,
    pub axis_value: Option<f64>,
    pub domain: DomainSpec,
    pub tasks: Vec<TaskDef>,
}

/// Expands the sweep (or the single base setting) into concrete points.
pub fn resolve_points(
    cfg: &ExperimentConfig,
    with_sweep: bool,
) -> Result<Vec<Point>, HarnessError> {
    let settings: Vec<Option<f64>> = match (&cfg.sweep, with_sweep) {
        (Some(s), true) => s.values.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    settings
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            let mut domain = cfg.domain.clone();
            let mut library_size = cfg.library_size;
            if let (Some(s), Some(v)) = (&cfg.sweep, value) {
                match (s.axis, &mut domain) {
                    (SweepAxis::States, DomainSpec::NightPursuit { width, height, .. }) => {
                        let side = grid_side_for_states(v)?;
                        *width = side;
                        *height = side;
                    }
                    (SweepAxis::Epsilon, DomainSpec::NightPursuit { epsilon, .. }) => *epsilon = v,
                    (SweepAxis::NumTasks, _) => library_size = Some(v as usize),
                    (axis, d) => {
                        return Err(HarnessError::Config(format!(
                            "{axis:?} sweep does not apply to {}",
                            d.name()
                        )))
                    }
                }
            }
            let pool = task_pool(&domain, &cfg.tasks, cfg.seed)?;
            let tasks = choose_library(pool, library_size, cfg.seed)?;
            Ok(Point {
                index,
                axis_value: value,
                domain,
                tasks,
            })
        })
        .collect()
}

fn task_pool(
    domain: &DomainSpec,
    spec: &TaskSpec,
    seed: u64,
) -> Result<Vec<TaskDef>, HarnessError> {
    let pool = match (domain, spec) {
        (
            DomainSpec::NightPursuit {
                width,
                height,
                epsilon,
            },
            TaskSpec::Preys { preys },
        ) => preys
            .iter()
            .map(|&p| {
                NightPursuitTask::new(p, *width, *height, *epsilon).map(TaskDef::NightPursuit)
            })
            .collect::<Result<Vec<_>, _>>()?,
        (
            DomainSpec::NightPursuit {
                width,
                height,
                epsilon,
            },
            TaskSpec::PreyPool { size },
        ) => {
            let grid = domain.night_grid().expect("night domain");
            grid.validate()?;
            let mut pairs = all_prey_pairs(&grid);
            if *size > pairs.len() {
                return Err(HarnessError::Config(format!(
                    "prey pool of {size} exceeds the {} distinct pairs on a {width}x{height} grid",
                    pairs.len()
                )));
            }
            pairs.shuffle(&mut rng_from_seed(derive_seed(&[seed, POOL_STREAM])));
            pairs.truncate(*size);
            pairs
                .into_iter()
                .map(|p| {
                    NightPursuitTask::new(p, *width, *height, *epsilon).map(TaskDef::NightPursuit)
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        (
            DomainSpec::PursuitPo {
                width,
                height,
                noise,
            },
            TaskSpec::Teammates { teammates },
        ) => teammates
            .iter()
            .map(|&t| TaskDef::PursuitPo(PursuitPoTask::with_grid(t, *width, *height, *noise)))
            .collect(),
        (DomainSpec::Overcooked, TaskSpec::Overcooked { tasks }) => {
            let tasks = tasks.clone().unwrap_or_else(OvercookedTask::all);
            for t in &tasks {
                t.validate()?;
            }
            tasks.into_iter().map(TaskDef::Overcooked).collect()
        }
        (d, t) => {
            return Err(HarnessError::Config(format!(
                "task spec {t:?} does not fit domain {}",
                d.name()
            )))
        }
    };
    if pool.is_empty() {
        return Err(HarnessError::Config("task pool is empty".into()));
    }
    let mut labels: Vec<String> = pool.iter().map(TaskDef::label).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != pool.len() {
        return Err(HarnessError::Config(
            "task pool contains duplicate tasks".into(),
        ));
    }
    Ok(pool)
}

/// Seeded subset of `m` pool tasks, kept in pool order.
fn choose_library(
    pool: Vec<TaskDef>,
    m: Option<usize>,
    seed: u64,
) -> Result<Vec<TaskDef>, HarnessError> {
    let Some(m) = m else { return Ok(pool) };
    if m > pool.len() {
        return Err(HarnessError::Config(format!(
            "library of {m} tasks requested from a pool of {}",
            pool.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(&[
        seed,
        LIBRARY_STREAM,
        m as u64,
    ])));
    idx.truncate(m);
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i].clone()).collect())
}

/// A built task with everything the agents need precomputed.
#[derive(Debug, Clone)]
pub struct SolvedTask {
    pub def: TaskDef,
    pub built: BuiltTask,
    pub pomdp: Arc<TabularPOMDP>,
    pub alpha: Arc<AlphaVectorPolicy>,
    pub mdp_values: Vec<f64>,
    /// Greedy MDP policy with lowest-index ties (the Value Iteration agent).
    pub vi_policy: Arc<StatePolicy>,
    /// Greedy MDP policy with uniform ties (BOPA and the Assistant).
    pub mdp_policy: Arc<StatePolicy>,
    pub teammate: Arc<ResponsivePolicy>,
    pub perseus_rounds: usize,
    pub perseus_converged: bool,
    pub from_cache: bool,
    pub setup_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SolvedLibrary {
    pub cache_key: String,
    pub tasks: Vec<SolvedTask>,
    pub library: Arc<TaskLibrary>,
    /// Largest one-step reward magnitude across the library.
    pub r_max: f64,
}

impl SolvedLibrary {
    pub fn labels(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.built.label.clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct CachedModel {
    version: u32,
    model: TabularPOMDP,
}

#[derive(Serialize, Deserialize)]
struct CachedPolicy {
    version: u32,
    policy: AlphaVectorPolicy,
    rounds: usize,
    converged: bool,
}

pub fn cache_key(domain: &DomainSpec, solver: &SolverConfig) -> String {
    hash_json(&(CACHE_VERSION, domain, solver))
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Paths of a task's cached model and policy.
pub fn cache_paths(dir: &Path, key: &str, label: &str) -> (PathBuf, PathBuf) {
    let base = dir.join(key);
    let stem = file_stem(label);
    (
        base.join(format!("{stem}.model")),
        base.join(format!("{stem}.policy")),
    )
}

fn load_cached(
    model_path: &Path,
    policy_path: &Path,
    built: &TabularPOMDP,
) -> Option<CachedPolicy> {
    let model: CachedModel = serde_json::from_slice(&fs::read(model_path).ok()?).ok()?;
    if model.version != CACHE_VERSION || &model.model != built {
        warn!("stale cache entry {}, rebuilding", model_path.display());
        return None;
    }
    let policy: CachedPolicy = serde_json::from_slice(&fs::read(policy_path).ok()?).ok()?;
    if policy.version != CACHE_VERSION || policy.policy.validate().is_err() {
        warn!("stale cache entry {}, rebuilding", policy_path.display());
        return None;
    }
    Some(policy)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let bytes = serde_json::to_vec(value)?;
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn solve_task(
    def: &TaskDef,
    solver: &SolverConfig,
    key: &str,
    cache_dir: Option<&Path>,
) -> Result<SolvedTask, HarnessError> {
    let start = Instant::now();
    let built = def.build()?;
    let pomdp = built.pomdp.clone();
    let paths = cache_dir.map(|d| cache_paths(d, key, &built.label));
    let cached = paths.as_ref().and_then(|(m, p)| load_cached(m, p, &pomdp));
    let from_cache = cached.is_some();
    let cached = match cached {
        Some(c) => {
            debug!("{}: loaded from cache", built.label);
            c
        }
        None => {
            let sol = PerseusConfig {
                num_beliefs: solver.num_beliefs,
                improvement_tol: solver.improvement_tol,
                max_rounds: solver.max_rounds,
                seed: solver.seed,
            }
            .solve(&pomdp);
            info!(
                "{}: perseus {} rounds, {} vectors, converged={}",
                built.label,
                sol.rounds(),
                sol.policy.len(),
                sol.converged
            );
            let c = CachedPolicy {
                version: CACHE_VERSION,
                rounds: sol.rounds(),
                converged: sol.converged,
                policy: sol.policy,
            };
            if let Some((m, p)) = &paths {
                write_json(
                    m,
                    &CachedModel {
                        version: CACHE_VERSION,
                        model: pomdp.clone(),
                    },
                )?;
                write_json(p, &c)?;
            }
            c
        }
    };
    let vf = value_iteration(pomdp.base(), solver.vi_tol, solver.vi_max_iters)?;
    let vi_policy = greedy_policy(&vf, TieBreak::LowestIndex)?;
    let mdp_policy = greedy_policy(&vf, TieBreak::Uniform)?;
    let teammate = Arc::new(built.teammate.clone());
    Ok(SolvedTask {
        def: def.clone(),
        pomdp: Arc::new(pomdp),
        alpha: Arc::new(cached.policy),
        mdp_values: vf.values,
        vi_policy: Arc::new(vi_policy),
        mdp_policy: Arc::new(mdp_policy),
        teammate,
        perseus_rounds: cached.rounds,
        perseus_converged: cached.converged,
        from_cache,
        setup_seconds: start.elapsed().as_secs_f64(),
        built,
    })
}

/// Builds and solves every task of a point (in parallel), reusing cached
/// solutions when `cache_dir` is given.
pub fn solve_library(
    domain: &DomainSpec,
    tasks: &[TaskDef],
    solver: &SolverConfig,
    cache_dir: Option<&Path>,
) -> Result<SolvedLibrary, HarnessError> {
    let key = cache_key(domain, solver);
    let solved = tasks
        .par_iter()
        .map(|d| solve_task(d, solver, &key, cache_dir))
        .collect::<Result<Vec<_>, _>>()?;
    let library = TaskLibrary::new(
        solved
            .iter()
            .map(|s| Task {
                label: s.built.label.clone(),
                pomdp: s.pomdp.clone(),
                policy: s.alpha.clone(),
            })
            .collect(),
    )?;
    let r_max = solved
        .iter()
        .map(|s| s.built.reward_bound)
        .fold(0.0, f64::max);
    Ok(SolvedLibrary {
        cache_key: key,
        tasks: solved,
        library: Arc::new(library),
        r_max,
    })
}
