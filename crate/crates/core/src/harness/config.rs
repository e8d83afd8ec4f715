//! JSON experiment configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::atpo::AtpoOptions;
use crate::baselines::AGENT_NAMES;
use crate::environments::grid::{Cell, GridSpec, NoiseModel};
use crate::environments::pursuit_po::DEFAULT_NOISE;
use crate::environments::{OvercookedTask, PursuitTeammate};

pub const DEFAULT_TRIALS: usize = 32;
pub const PURSUIT_HORIZON: usize = 50;
pub const OVERCOOKED_HORIZON: usize = 75;
pub const DEFAULT_POOL_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    NightPursuit {
        width: usize,
        height: usize,
        epsilon: f64,
    },
    PursuitPo {
        #[serde(default = "five")]
        width: usize,
        #[serde(default = "five")]
        height: usize,
        #[serde(default = "default_decay")]
        noise: NoiseModel,
    },
    Overcooked,
}

fn five() -> usize {
    5
}

fn default_decay() -> NoiseModel {
    DEFAULT_NOISE
}

impl DomainSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DomainSpec::NightPursuit { .. } => "night_pursuit",
            DomainSpec::PursuitPo { .. } => "pursuit_po",
            DomainSpec::Overcooked => "overcooked",
        }
    }

    pub fn default_horizon(&self) -> usize {
        match self {
            DomainSpec::Overcooked => OVERCOOKED_HORIZON,
            _ => PURSUIT_HORIZON,
        }
    }

    pub fn night_grid(&self) -> Option<GridSpec> {
        match *self {
            DomainSpec::NightPursuit {
                width,
                height,
                epsilon,
            } => Some(GridSpec {
                width,
                height,
                toroidal: false,
                noise: NoiseModel::Constant { epsilon },
            }),
            _ => None,
        }
    }
}

/// The pool of candidate tasks; the library is this pool or a seeded subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// Night-time Pursuit prey pairs given explicitly.
    Preys {
        preys: Vec<[Cell; 2]>,
    },
    /// Night-time Pursuit: `size` distinct prey pairs drawn from the seed.
    PreyPool {
        #[serde(default = "default_pool")]
        size: usize,
    },
    Teammates {
        teammates: Vec<PursuitTeammate>,
    },
    /// Overcooked role/teammate combinations; all six when omitted.
    Overcooked {
        #[serde(default)]
        tasks: Option<Vec<OvercookedTask>>,
    },
}

fn default_pool() -> usize {
    DEFAULT_POOL_SIZE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    /// `trials` trials with every library task as the target.
    #[default]
    EachTask,
    /// `trials` trials, each with a target drawn uniformly from the library.
    RandomFromLibrary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Night-time Pursuit state count `(w·h)²` of a square grid.
    States,
    Epsilon,
    NumTasks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Perseus belief-set size; `min(2000, ⌈10√|X|⌉)` when absent.
    pub num_beliefs: Option<usize>,
    pub improvement_tol: f64,
    pub max_rounds: usize,
    pub seed: u64,
    pub vi_tol: f64,
    pub vi_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            num_beliefs: None,
            improvement_tol: 1e-4,
            max_rounds: 200,
            seed: 0,
            vi_tol: crate::decision::DEFAULT_TOL,
            vi_max_iters: crate::decision::DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub tasks: TaskSpec,
    /// Library size drawn from the pool; the whole pool when absent.
    #[serde(default)]
    pub library_size: Option<usize>,
    #[serde(default)]
    pub target: TargetSpec,
    pub agents: Vec<String>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub atpo: AtpoOptions,
    /// BOPA acts with the posterior mixture instead of sampling a task.
    #[serde(default)]
    pub bopa_mixing: bool,
}

impl ExperimentConfig {
    pub fn from_json(src: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(src).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
            .unwrap_or_else(|| self.domain.default_horizon())
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(DEFAULT_TRIALS)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.agents.is_empty() {
            return bad("no agents configured".into());
        }
        for a in &self.agents {
            if !AGENT_NAMES.contains(&a.as_str()) {
                return bad(format!(
                    "unknown agent {a:?}; expected one of {AGENT_NAMES:?}"
                ));
            }
            if a == "assistant" && !matches!(self.domain, DomainSpec::Overcooked) {
                return bad(
                    "the assistant agent needs a fully observable domain (overcooked)".into(),
                );
            }
        }
        match (&self.domain, &self.tasks) {
            (
                DomainSpec::NightPursuit { .. },
                TaskSpec::Preys { .. } | TaskSpec::PreyPool { .. },
            )
            | (DomainSpec::PursuitPo { .. }, TaskSpec::Teammates { .. })
            | (DomainSpec::Overcooked, TaskSpec::Overcooked { .. }) => {}
            (d, t) => return bad(format!("task spec {t:?} does not fit domain {}", d.name())),
        }
        if self.horizon == Some(0) || self.trials == Some(0) {
            return bad("horizon and trials must be positive".into());
        }
        if self.library_size == Some(0) {
            return bad("library_size must be positive".into());
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return bad("sweep has no values".into());
            }
            let night = matches!(self.domain, DomainSpec::NightPursuit { .. });
            match s.axis {
                SweepAxis::States | SweepAxis::Epsilon if !night => {
                    return bad(format!("{:?} sweeps need the night_pursuit domain", s.axis))
                }
                SweepAxis::States => {
                    for &v in &s.values {
                        grid_side_for_states(v)?;
                    }
                }
                SweepAxis::Epsilon => {
                    if s.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return bad("epsilon values must lie in [0, 1]".into());
                    }
                }
                SweepAxis::NumTasks => {
                    if s.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                        return bad("num_tasks values must be positive integers".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Side `s` of the square grid with `(s²)² = n` states.
pub fn grid_side_for_states(n: f64) -> Result<usize, HarnessError> {
    let side = n.sqrt().sqrt().round() as usize;
    if side >= 3 && ((side * side) * (side * side)) as f64 == n {
        Ok(side)
    } else {
        Err(HarnessError::Config(format!(
            "{n} is not the state count (w·h)² of a square grid of side ≥ 3"
        )))
    }
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialize");
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "domain": {"kind": "night_pursuit", "width": 3, "height": 3, "epsilon": 0.3},
        "tasks": {"kind": "preys", "preys": [[{"col":0,"row":0},{"col":2,"row":2}]]},
        "agents": ["atpo", "vi"]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.horizon(), 50);
        assert_eq!(cfg.trials(), 32);
        assert_eq!(cfg.target, TargetSpec::EachTask);
        assert_eq!(cfg.solver.max_rounds, 200);
    }

    #[test]
    fn hash_tracks_epsilon() {
        let a = ExperimentConfig::from_json(BASE).unwrap();
        let b = ExperimentConfig::from_json(&BASE.replace("0.3", "0.25")).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ExperimentConfig::from_json(BASE).unwrap().hash());
    }

    #[test]
    fn rejects_bad_agents_and_mismatches() {
        let unknown = BASE.replace("\"vi\"", "\"oracle\"");
        assert!(matches!(
            ExperimentConfig::from_json(&unknown),
            Err(HarnessError::Config(_))
        ));
        let assistant = BASE.replace("\"vi\"", "\"assistant\"");
        assert!(ExperimentConfig::from_json(&assistant).is_err());
        let wrong = BASE.replace(
            "\"night_pursuit\", \"width\": 3, \"height\": 3, \"epsilon\": 0.3",
            "\"overcooked\"",
        );
        assert!(ExperimentConfig::from_json(&wrong).is_err());
    }

    #[test]
    fn state_axis_values() {
        assert_eq!(grid_side_for_states(81.0).unwrap(), 3);
        assert_eq!(grid_side_for_states(625.0).unwrap(), 5);
        assert_eq!(grid_side_for_states(1296.0).unwrap(), 6);
        assert!(grid_side_for_states(100.0).is_err());
    }
}
