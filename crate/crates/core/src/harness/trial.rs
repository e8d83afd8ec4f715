//! Single trials: one agent, one target task, one seeded episode.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::library::SolvedLibrary;
use super::HarnessError;
use crate::atpo::{
    atpo_loss, posterior_entropy, verify_bound, BoundReport, TaskPosterior, TraceRecord, TraceStep,
};
use crate::baselines::{
    Agent, AssistantAgent, AssistantTask, AtpoAgent, BopaAgent, BopaTask, PerseusAgent,
    RandomAgent, TransitionRecord, ValueIterationAgent,
};
use crate::environments::DISCOUNT;
use crate::sampling::{derive_seed, rng_from_seed};

pub const ENV_STREAM: u64 = 0;
pub const AGENT_STREAM: u64 = 1;

/// Outcome of one trial. Deterministic given the configuration; wall-clock
/// measurements live in [`TrialTiming`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_hash: String,
    pub point: usize,
    pub axis_value: Option<f64>,
    pub agent: String,
    pub target: usize,
    pub target_label: String,
    pub trial: usize,
    /// Step at which the episode completed, or the horizon.
    pub steps: usize,
    /// False when the horizon cut the episode (censored).
    pub completed: bool,
    pub cumulative_reward: f64,
    /// Soups served (Overcooked) or captures (pursuit, at most one).
    pub successes: usize,
    /// Task-posterior entropy before each step and after the last one;
    /// empty for agents without a task posterior.
    pub entropy: Vec<f64>,
    pub final_posterior: Option<Vec<f64>>,
    /// Posterior argmax at episode end equals the target.
    pub identified: Option<bool>,
    /// ATPO's per-step `L_t(p_t)`.
    pub losses: Vec<f64>,
    /// Bound evaluated with `q` = point mass on the target.
    pub bound_target: Option<BoundReport>,
    /// Bound evaluated with `q` uniform over the library.
    pub bound_uniform: Option<BoundReport>,
    /// Posterior resets of the BOPA/Assistant heuristics.
    pub posterior_resets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub agent: String,
    pub point: usize,
    pub target: usize,
    pub trial: usize,
    pub decision_seconds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub record: TrialRecord,
    pub trace: Option<TraceRecord>,
    pub timing: TrialTiming,
}

/// Instantiates agent `name` for a trial whose target is task `target`.
pub fn make_agent(
    name: &str,
    cfg: &ExperimentConfig,
    lib: &SolvedLibrary,
    target: usize,
) -> Result<Box<dyn Agent>, HarnessError> {
    let t = &lib.tasks[target];
    Ok(match name {
        "vi" => Box::new(ValueIterationAgent::new(t.vi_policy.clone())),
        "perseus" => Box::new(PerseusAgent::new(t.pomdp.clone(), t.alpha.clone())),
        "atpo" => Box::new(AtpoAgent::new(lib.library.clone(), cfg.atpo, None)?),
        "bopa" => Box::new(BopaAgent::new(
            lib.tasks
                .iter()
                .map(|s| BopaTask {
                    pomdp: s.pomdp.clone(),
                    mdp_policy: s.mdp_policy.clone(),
                })
                .collect(),
            cfg.bopa_mixing,
        )),
        "assistant" => Box::new(AssistantAgent::new(
            lib.tasks
                .iter()
                .map(|s| AssistantTask {
                    teammate: s.teammate.clone(),
                    mdp_policy: s.mdp_policy.clone(),
                })
                .collect(),
        )),
        "random" => Box::new(RandomAgent::new(lib.library.num_actions())),
        other => return Err(HarnessError::Config(format!("unknown agent {other:?}"))),
    })
}

fn entropy_of(p: &[f64]) -> f64 {
    posterior_entropy(&TaskPosterior::new(p.to_vec()).expect("agent posteriors are distributions"))
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Seed of a trial's stream; shared by all agents so they face the same
/// initial states and environment noise.
pub fn trial_seed(seed: u64, point: usize, target: usize, trial: usize, stream: u64) -> u64 {
    derive_seed(&[seed, point as u64, target as u64, trial as u64, stream])
}

#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    cfg: &ExperimentConfig,
    config_hash: &str,
    point: usize,
    axis_value: Option<f64>,
    lib: &SolvedLibrary,
    agent_name: &str,
    target: usize,
    trial: usize,
) -> Result<TrialOutput, HarnessError> {
    let mut agent = make_agent(agent_name, cfg, lib, target)?;
    let info = agent.information();
    let task = &lib.tasks[target];
    let sim = task.built.simulator.clone();
    let horizon = cfg.horizon();
    let mut env_rng = rng_from_seed(trial_seed(cfg.seed, point, target, trial, ENV_STREAM));
    let mut agent_rng = rng_from_seed(trial_seed(cfg.seed, point, target, trial, AGENT_STREAM));

    agent.reset();
    let mut state = sim.reset(&mut env_rng);
    let mut entropy = Vec::new();
    if let Some(p) = agent.task_posterior() {
        entropy.push(entropy_of(p));
    }
    let tracing = agent_name == "atpo";
    let mut trace_steps = Vec::new();
    let mut losses = Vec::new();
    let mut decision_seconds = Vec::with_capacity(horizon);
    let mut reward = 0.0;
    let mut successes = 0;
    let mut steps = horizon;
    let mut completed = false;

    for t in 0..horizon {
        let visible = info.sees_state().then_some(state.index);
        let clock = Instant::now();
        let pre = if tracing {
            let atpo = agent.as_atpo().expect("atpo agent");
            let per_task = atpo_loss(atpo.state(), atpo.library(), target);
            Some((atpo.state().posterior.probs().to_vec(), per_task))
        } else {
            None
        };
        let action = agent.act(visible, &mut agent_rng)?;
        let mixed = agent
            .as_atpo()
            .and_then(|a| a.state().last_mixed_policy.clone());
        let mut elapsed = clock.elapsed().as_secs_f64();

        let out = sim.step(&state, action, &mut env_rng)?;
        let record = TransitionRecord {
            prev_state: visible,
            next_state: info.sees_state().then_some(out.next.index),
            observation: out.observation,
            teammate_action: info.sees_teammate().then_some(out.teammate_action),
            own_action: action,
        };
        let clock = Instant::now();
        agent.observe(&record)?;
        elapsed += clock.elapsed().as_secs_f64();
        decision_seconds.push(elapsed);

        reward += out.reward;
        successes += usize::from(out.success);
        if let Some(p) = agent.task_posterior() {
            entropy.push(entropy_of(p));
        }
        if let Some((posterior, per_task)) = pre {
            let mixed = mixed.unwrap_or_default();
            losses.push(posterior.iter().zip(&per_task).map(|(p, l)| p * l).sum());
            trace_steps.push(TraceStep {
                t,
                action,
                observation: out.observation,
                action_probability: mixed.get(action).copied().unwrap_or(0.0),
                posterior,
                mixed_policy: mixed,
                losses: per_task,
                reward: out.reward,
            });
        }
        state = out.next;
        if out.done {
            steps = t + 1;
            completed = true;
            break;
        }
    }

    let final_posterior = agent.task_posterior().map(<[f64]>::to_vec);
    let identified = final_posterior.as_ref().map(|p| argmax(p) == target);
    let trace = tracing.then(|| TraceRecord {
        labels: lib.labels(),
        target,
        steps: trace_steps,
    });
    let (bound_target, bound_uniform) = match &trace {
        Some(tr) => {
            let k = lib.tasks.len();
            (
                Some(verify_bound(
                    tr,
                    &TaskPosterior::point(k, target),
                    lib.r_max,
                    DISCOUNT,
                )),
                Some(verify_bound(
                    tr,
                    &TaskPosterior::uniform(k),
                    lib.r_max,
                    DISCOUNT,
                )),
            )
        }
        None => (None, None),
    };
    Ok(TrialOutput {
        record: TrialRecord {
            config_hash: config_hash.to_string(),
            point,
            axis_value,
            agent: agent_name.to_string(),
            target,
            target_label: task.built.label.clone(),
            trial,
            steps,
            completed,
            cumulative_reward: reward,
            successes,
            entropy,
            final_posterior,
            identified,
            losses,
            bound_target,
            bound_uniform,
            posterior_resets: agent.posterior_resets(),
        },
        trace,
        timing: TrialTiming {
            agent: agent_name.to_string(),
            point,
            target,
            trial,
            decision_seconds,
        },
    })
}
