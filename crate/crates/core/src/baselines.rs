//! Agents behind one interface: ATPO itself, the omniscient Value Iteration
//! and Perseus agents, BOPA with the most-likely-state heuristic, the
//! action-observing Assistant, and a random agent.
//!
//! The harness fills a [`TransitionRecord`] with only the fields an agent's
//! [`Information`] level grants, so an observation-only agent never sees the
//! true state or the teammate's action.

use std::sync::Arc;

use log::debug;
use rand::{Rng, RngCore};
use thiserror::Error;

use crate::atpo::{
    atpo_act, atpo_init, atpo_update, AtpoError, AtpoOptions, AtpoState, TaskLibrary, TaskPosterior,
};
use crate::decision::{ResponsivePolicy, StatePolicy};
use crate::pomdp::{
    belief_update, greedy_belief_policy, AlphaVectorPolicy, Belief, BeliefUpdate, TabularPOMDP,
};
use crate::sampling::sample_discrete;

/// What the environment reveals to an agent after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Information {
    /// The observation symbol only.
    Observation,
    /// The true state (and the observation).
    State,
    /// The true state and the teammate's action.
    StateAndTeammate,
}

impl Information {
    pub fn sees_state(self) -> bool {
        !matches!(self, Information::Observation)
    }

    pub fn sees_teammate(self) -> bool {
        matches!(self, Information::StateAndTeammate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TransitionRecord {
    pub prev_state: Option<usize>,
    pub next_state: Option<usize>,
    pub observation: usize,
    pub teammate_action: Option<usize>,
    pub own_action: usize,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("observation {observation} after action {action} has zero probability under the agent's model")]
    Inconsistent { action: usize, observation: usize },
    #[error("agent needs {0}, which its information level does not provide")]
    MissingInformation(&'static str),
    #[error(transparent)]
    Atpo(#[from] AtpoError),
}

pub trait Agent: Send {
    fn name(&self) -> &'static str;

    fn information(&self) -> Information;

    /// Returns to the start of an episode.
    fn reset(&mut self);

    /// `state` is `Some` only for agents whose information level grants it.
    fn act(&mut self, state: Option<usize>, rng: &mut dyn RngCore) -> Result<usize, AgentError>;

    fn observe(&mut self, record: &TransitionRecord) -> Result<(), AgentError>;

    /// Current belief over tasks, for agents that keep one.
    fn task_posterior(&self) -> Option<&[f64]> {
        None
    }

    /// Heuristic posterior resets so far in this episode.
    fn posterior_resets(&self) -> usize {
        0
    }

    /// Access to ATPO's internals for tracing.
    fn as_atpo(&self) -> Option<&AtpoAgent> {
        None
    }
}

fn need_state(state: Option<usize>) -> Result<usize, AgentError> {
    state.ok_or(AgentError::MissingInformation("the true state"))
}

/// Knows the target task and sees the state; follows the optimal MDP policy.
#[derive(Debug, Clone)]
pub struct ValueIterationAgent {
    policy: Arc<StatePolicy>,
}

impl ValueIterationAgent {
    pub fn new(policy: Arc<StatePolicy>) -> Self {
        Self { policy }
    }
}

impl Agent for ValueIterationAgent {
    fn name(&self) -> &'static str {
        "vi"
    }

    fn information(&self) -> Information {
        Information::State
    }

    fn reset(&mut self) {}

    fn act(&mut self, state: Option<usize>, rng: &mut dyn RngCore) -> Result<usize, AgentError> {
        Ok(sample_discrete(self.policy.row(need_state(state)?), rng))
    }

    fn observe(&mut self, _record: &TransitionRecord) -> Result<(), AgentError> {
        Ok(())
    }
}

/// Knows the target task but only sees observations; tracks the exact belief
/// and acts greedily on the task's alpha vectors.
#[derive(Debug, Clone)]
pub struct PerseusAgent {
    pomdp: Arc<TabularPOMDP>,
    policy: Arc<AlphaVectorPolicy>,
    belief: Belief,
}

impl PerseusAgent {
    pub fn new(pomdp: Arc<TabularPOMDP>, policy: Arc<AlphaVectorPolicy>) -> Self {
        let belief = pomdp.initial_belief().clone();
        Self {
            pomdp,
            policy,
            belief,
        }
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }
}

impl Agent for PerseusAgent {
    fn name(&self) -> &'static str {
        "perseus"
    }

    fn information(&self) -> Information {
        Information::Observation
    }

    fn reset(&mut self) {
        self.belief = self.pomdp.initial_belief().clone();
    }

    fn act(&mut self, _state: Option<usize>, rng: &mut dyn RngCore) -> Result<usize, AgentError> {
        let pi = greedy_belief_policy(&self.pomdp, &self.policy, &self.belief);
        Ok(sample_discrete(&pi, rng))
    }

    fn observe(&mut self, r: &TransitionRecord) -> Result<(), AgentError> {
        match belief_update(&self.pomdp, &self.belief, r.own_action, r.observation) {
            BeliefUpdate::Updated { belief, .. } => {
                self.belief = belief;
                Ok(())
            }
            BeliefUpdate::Impossible => Err(AgentError::Inconsistent {
                action: r.own_action,
                observation: r.observation,
            }),
        }
    }
}

/// ATPO behind the common agent interface.
#[derive(Debug, Clone)]
pub struct AtpoAgent {
    library: Arc<TaskLibrary>,
    options: AtpoOptions,
    prior: Option<TaskPosterior>,
    state: AtpoState,
}

impl AtpoAgent {
    pub fn new(
        library: Arc<TaskLibrary>,
        options: AtpoOptions,
        prior: Option<TaskPosterior>,
    ) -> Result<Self, AgentError> {
        let state = atpo_init(&library, prior.clone())?;
        Ok(Self {
            library,
            options,
            prior,
            state,
        })
    }

    pub fn state(&self) -> &AtpoState {
        &self.state
    }

    pub fn library(&self) -> &TaskLibrary {
        &self.library
    }
}

impl Agent for AtpoAgent {
    fn name(&self) -> &'static str {
        "atpo"
    }

    fn information(&self) -> Information {
        Information::Observation
    }

    fn reset(&mut self) {
        self.state = atpo_init(&self.library, self.prior.clone())
            .expect("prior was validated at construction");
    }

    fn act(&mut self, _state: Option<usize>, rng: &mut dyn RngCore) -> Result<usize, AgentError> {
        Ok(atpo_act(&mut self.state, &self.library, self.options.selection, rng).0)
    }

    fn observe(&mut self, r: &TransitionRecord) -> Result<(), AgentError> {
        self.state = atpo_update(
            &self.state,
            &self.library,
            r.own_action,
            r.observation,
            &self.options,
        )?;
        Ok(())
    }

    fn task_posterior(&self) -> Option<&[f64]> {
        Some(self.state.posterior.probs())
    }

    fn as_atpo(&self) -> Option<&AtpoAgent> {
        Some(self)
    }
}

/// One task as BOPA sees it: its POMDP (for belief tracking) and the optimal
/// policy of its underlying MDP.
#[derive(Debug, Clone)]
pub struct BopaTask {
    pub pomdp: Arc<TabularPOMDP>,
    pub mdp_policy: Arc<StatePolicy>,
}

/// BOPA with the most-likely-state heuristic: each task's belief is
/// collapsed to its mode and the fully observable task posterior update is
/// applied to those modes.
#[derive(Debug, Clone)]
pub struct BopaAgent {
    tasks: Vec<BopaTask>,
    /// Act with the posterior-weighted mixture instead of sampling a task.
    mixing: bool,
    posterior: Vec<f64>,
    beliefs: Vec<Belief>,
    resets: usize,
}

impl BopaAgent {
    pub fn new(tasks: Vec<BopaTask>, mixing: bool) -> Self {
        let k = tasks.len();
        let beliefs = tasks
            .iter()
            .map(|t| t.pomdp.initial_belief().clone())
            .collect();
        Self {
            tasks,
            mixing,
            posterior: vec![1.0 / k as f64; k],
            beliefs,
            resets: 0,
        }
    }

    /// Times the posterior had to be reset because every task assigned the
    /// most-likely transition zero probability.
    pub fn resets(&self) -> usize {
        self.resets
    }

    fn mode(&self, k: usize) -> usize {
        self.beliefs[k].most_likely_state()
    }
}

impl Agent for BopaAgent {
    fn name(&self) -> &'static str {
        "bopa"
    }

    fn information(&self) -> Information {
        Information::Observation
    }

    fn reset(&mut self) {
        let k = self.tasks.len();
        self.posterior = vec![1.0 / k as f64; k];
        self.beliefs = self
            .tasks
            .iter()
            .map(|t| t.pomdp.initial_belief().clone())
            .collect();
        self.resets = 0;
    }

    fn act(&mut self, _state: Option<usize>, rng: &mut dyn RngCore) -> Result<usize, AgentError> {
        if self.mixing {
            let mut mix = vec![0.0; self.tasks[0].mdp_policy.num_actions()];
            for (k, &w) in self.posterior.iter().enumerate() {
                for (m, &p) in mix
                    .iter_mut()
                    .zip(self.tasks[k].mdp_policy.row(self.mode(k)))
                {
                    *m += w * p;
                }
            }
            Ok(sample_discrete(&mix, rng))
        } else {
            let k = sample_discrete(&self.posterior, rng);
            Ok(sample_discrete(
                self.tasks[k].mdp_policy.row(self.mode(k)),
                rng,
            ))
        }
    }

    fn observe(&mut self, r: &TransitionRecord) -> Result<(), AgentError> {
        let mut weights = vec![0.0; self.tasks.len()];
        for (k, task) in self.tasks.iter().enumerate() {
            let before = self.mode(k);
            // a task that cannot produce the observation at all explains nothing
            if let BeliefUpdate::Updated { belief, .. } =
                belief_update(&task.pomdp, &self.beliefs[k], r.own_action, r.observation)
            {
                self.beliefs[k] = belief;
                let after = self.mode(k);
                let lik = task
                    .pomdp
                    .base()
                    .transition()
                    .prob(r.own_action, before, after);
                weights[k] = lik * self.posterior[k];
            }
        }
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            self.posterior = weights.iter().map(|w| w / total).collect();
        } else {
            debug!("bopa: no task explains the most-likely transition, resetting posterior");
            self.resets += 1;
            let k = self.tasks.len();
            self.posterior = vec![1.0 / k as f64; k];
        }
        Ok(())
    }

    fn task_posterior(&self) -> Option<&[f64]> {
        Some(&self.posterior)
    }

    fn posterior_resets(&self) -> usize {
        self.resets
    }
}

/// One task as the Assistant sees it: the teammate model and the optimal
/// policy of the reduced MDP.
#[derive(Debug, Clone)]
pub struct AssistantTask {
    pub teammate: Arc<ResponsivePolicy>,
    pub mdp_policy: Arc<StatePolicy>,
}

/// Sees the state and the teammate's action; infers the task from the
/// teammate's action likelihoods.
#[derive(Debug, Clone)]
pub struct AssistantAgent {
    tasks: Vec<AssistantTask>,
    posterior: Vec<f64>,
    resets: usize,
}

impl AssistantAgent {
    pub fn new(tasks: Vec<AssistantTask>) -> Self {
        let k = tasks.len();
        Self {
            tasks,
            posterior: vec![1.0 / k as f64; k],
            resets: 0,
        }
    }

    pub fn resets(&self) -> usize {
        self.resets
    }
}

impl Agent for AssistantAgent {
    fn name(&self) -> &'static str {
        "assistant"
    }

    fn information(&self) -> Information {
        Information::StateAndTeammate
    }

    fn reset(&mut self) {
        let k = self.tasks.len();
        self.posterior = vec![1.0 / k as f64; k];
        self.resets = 0;
    }

    fn act(&mut self, state: Option<usize>, rng: &mut dyn RngCore) -> Result<usize, AgentError> {
        let x = need_state(state)?;
        let mut mix = vec![0.0; self.tasks[0].mdp_policy.num_actions()];
        for (task, &w) in self.tasks.iter().zip(&self.posterior) {
            for (m, &p) in mix.iter_mut().zip(task.mdp_policy.row(x)) {
                *m += w * p;
            }
        }
        Ok(sample_discrete(&mix, rng))
    }

    fn observe(&mut self, r: &TransitionRecord) -> Result<(), AgentError> {
        let x = need_state(r.prev_state)?;
        let b = r
            .teammate_action
            .ok_or(AgentError::MissingInformation("the teammate's action"))?;
        let weights: Vec<f64> = self
            .tasks
            .iter()
            .zip(&self.posterior)
            .map(|(t, &p)| t.teammate.prob(x, r.own_action, b) * p)
            .collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            self.posterior = weights.iter().map(|w| w / total).collect();
        } else {
            debug!(
                "assistant: teammate action {b} impossible under every task, resetting posterior"
            );
            self.resets += 1;
            let k = self.tasks.len();
            self.posterior = vec![1.0 / k as f64; k];
        }
        Ok(())
    }

    fn task_posterior(&self) -> Option<&[f64]> {
        Some(&self.posterior)
    }

    fn posterior_resets(&self) -> usize {
        self.resets
    }
}

#[derive(Debug, Clone)]
pub struct RandomAgent {
    num_actions: usize,
}

impl RandomAgent {
    pub fn new(num_actions: usize) -> Self {
        Self { num_actions }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &'static str {
        "random"
    }

    fn information(&self) -> Information {
        Information::Observation
    }

    fn reset(&mut self) {}

    fn act(&mut self, _state: Option<usize>, rng: &mut dyn RngCore) -> Result<usize, AgentError> {
        Ok(rng.gen_range(0..self.num_actions))
    }

    fn observe(&mut self, _record: &TransitionRecord) -> Result<(), AgentError> {
        Ok(())
    }
}

/// Agent names accepted by the harness.
pub const AGENT_NAMES: [&str; 6] = ["vi", "perseus", "atpo", "bopa", "assistant", "random"];
