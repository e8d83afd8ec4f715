//! Bayesian task inference for the ad hoc agent.
//!
//! The agent keeps one exact belief per candidate task and a posterior over
//! tasks. Actions come from the posterior-weighted mixture of the per-task
//! greedy belief policies; after each `(action, observation)` pair every
//! task's belief is filtered and its posterior weight is multiplied by the
//! filter's normalization mass.

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModelError;
use crate::kernel::check_distribution;
use crate::pomdp::{
    belief_update, greedy_belief_policy, q_values, AlphaVectorPolicy, Belief, BeliefUpdate,
    TabularPOMDP,
};
use crate::sampling::sample_discrete;

/// Posterior mass given to tasks whose likelihood vanished when the floor
/// option is enabled.
pub const POSTERIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtpoError {
    #[error("no task in the library explains observation {observation} after action {action}")]
    NoConsistentTask { action: usize, observation: usize },
    #[error("atpo_update called without a preceding atpo_act")]
    MissingMixedPolicy,
    #[error("task library is empty")]
    EmptyLibrary,
    #[error("task {index} ({label}) has {found} actions / {observations} observations, library uses {expected} / {expected_observations}")]
    IncompatibleTask {
        index: usize,
        label: String,
        expected: usize,
        found: usize,
        expected_observations: usize,
        observations: usize,
    },
    #[error("prior has {found} entries for {expected} tasks")]
    PriorLength { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One candidate task: its induced POMDP and precomputed solution.
#[derive(Debug, Clone)]
pub struct Task {
    pub label: String,
    pub pomdp: Arc<TabularPOMDP>,
    pub policy: Arc<AlphaVectorPolicy>,
}

/// Candidate tasks sharing one action alphabet and one observation alphabet.
#[derive(Debug, Clone)]
pub struct TaskLibrary {
    tasks: Vec<Task>,
}

impl TaskLibrary {
    pub fn new(tasks: Vec<Task>) -> Result<Self, AtpoError> {
        let first = tasks.first().ok_or(AtpoError::EmptyLibrary)?;
        let (na, nz) = (first.pomdp.num_actions(), first.pomdp.num_observations());
        for (i, t) in tasks.iter().enumerate() {
            if t.pomdp.num_actions() != na || t.pomdp.num_observations() != nz {
                return Err(AtpoError::IncompatibleTask {
                    index: i,
                    label: t.label.clone(),
                    expected: na,
                    found: t.pomdp.num_actions(),
                    expected_observations: nz,
                    observations: t.pomdp.num_observations(),
                });
            }
            if t.policy.num_states() != t.pomdp.num_states() {
                return Err(ModelError::DimensionMismatch {
                    what: "task policy states",
                    expected: t.pomdp.num_states(),
                    found: t.policy.num_states(),
                }
                .into());
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.tasks[0].pomdp.num_actions()
    }

    pub fn labels(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.label.clone()).collect()
    }

    /// `π̂_k(· | b)` for task `k`.
    pub fn task_policy(&self, k: usize, b: &Belief) -> Vec<f64> {
        let t = &self.tasks[k];
        greedy_belief_policy(&t.pomdp, &t.policy, b)
    }
}

/// Probability vector over the tasks of a library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskPosterior(Vec<f64>);

impl TaskPosterior {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        check_distribution(&probs)?;
        Ok(Self(probs))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn point(k: usize, i: usize) -> Self {
        let mut p = vec![0.0; k];
        p[i] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Lowest-index most probable task.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Shannon entropy in nats, with `0·log 0 = 0`.
pub fn posterior_entropy(p: &TaskPosterior) -> f64 {
    p.probs()
        .iter()
        .filter(|&&v| v > 0.0)
        .fold(0.0, |h, &v| h - v * v.ln())
}

/// `KL(q ‖ p)` in nats; `+∞` when `q` puts mass where `p` has none.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| {
            if qi == 0.0 {
                0.0
            } else if pi == 0.0 {
                f64::INFINITY
            } else {
                qi * (qi / pi).ln()
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ActionSelection {
    /// Sample from the mixed policy.
    #[default]
    Sample,
    /// Argmax of the mixed policy, lowest index on ties.
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AtpoOptions {
    pub selection: ActionSelection,
    /// Keep zero-likelihood tasks alive at [`POSTERIOR_FLOOR`] instead of
    /// dropping them.
    pub posterior_floor: bool,
}

/// Recursively maintained ATPO state.
#[derive(Debug, Clone, PartialEq)]
pub struct AtpoState {
    pub posterior: TaskPosterior,
    /// `b_{k,t}`; a dropped task keeps its last consistent belief.
    pub per_task_beliefs: Vec<Belief>,
    pub last_mixed_policy: Option<Vec<f64>>,
    /// `π_t(a_t | h_t)` of the most recent update, kept for the trace.
    pub last_action_probability: Option<f64>,
    /// Normalization masses `ρ_k` of the most recent update.
    pub last_likelihoods: Option<Vec<f64>>,
}

/// Initial state: every task at its initial belief, posterior = prior.
pub fn atpo_init(
    library: &TaskLibrary,
    prior: Option<TaskPosterior>,
) -> Result<AtpoState, AtpoError> {
    let k = library.len();
    let posterior = match prior {
        Some(p) if p.len() != k => {
            return Err(AtpoError::PriorLength {
                expected: k,
                found: p.len(),
            })
        }
        Some(p) => p,
        None => TaskPosterior::uniform(k),
    };
    Ok(AtpoState {
        posterior,
        per_task_beliefs: library
            .tasks()
            .iter()
            .map(|t| t.pomdp.initial_belief().clone())
            .collect(),
        last_mixed_policy: None,
        last_action_probability: None,
        last_likelihoods: None,
    })
}

/// `π_t(a) = Σ_k π̂_k(a | b_{k,t}) p_t(m_k)`; tasks with zero posterior are
/// skipped.
pub fn mixed_policy(state: &AtpoState, library: &TaskLibrary) -> Vec<f64> {
    let mut mix = vec![0.0; library.num_actions()];
    for (k, &w) in state.posterior.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let pi = library.task_policy(k, &state.per_task_beliefs[k]);
        for (m, p) in mix.iter_mut().zip(pi) {
            *m += w * p;
        }
    }
    mix
}

/// Chooses an action from the mixed policy and stores the policy in `state`.
pub fn atpo_act<R: RngCore + ?Sized>(
    state: &mut AtpoState,
    library: &TaskLibrary,
    selection: ActionSelection,
    rng: &mut R,
) -> (usize, Vec<f64>) {
    let mix = mixed_policy(state, library);
    let action = match selection {
        ActionSelection::Sample => sample_discrete(&mix, rng),
        ActionSelection::Argmax => {
            let mut best = 0;
            for (i, &p) in mix.iter().enumerate() {
                if p > mix[best] {
                    best = i;
                }
            }
            best
        }
    };
    state.last_mixed_policy = Some(mix.clone());
    (action, mix)
}

/// Filters every task's belief and reweights the task posterior.
pub fn atpo_update(
    state: &AtpoState,
    library: &TaskLibrary,
    action: usize,
    observation: usize,
    options: &AtpoOptions,
) -> Result<AtpoState, AtpoError> {
    let mixed = state
        .last_mixed_policy
        .as_ref()
        .ok_or(AtpoError::MissingMixedPolicy)?;
    let action_prob = mixed[action];
    let k = library.len();
    let mut beliefs = Vec::with_capacity(k);
    let mut rho = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for (i, task) in library.tasks().iter().enumerate() {
        let prior = state.posterior.probs()[i];
        let b = &state.per_task_beliefs[i];
        if prior == 0.0 {
            beliefs.push(b.clone());
            continue;
        }
        match belief_update(&task.pomdp, b, action, observation) {
            BeliefUpdate::Updated { belief, likelihood } => {
                rho[i] = likelihood;
                // π_t(a|h_t) is shared by all tasks and cancels on normalization
                weights[i] = likelihood * prior;
                beliefs.push(belief);
            }
            BeliefUpdate::Impossible => beliefs.push(b.clone()),
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(AtpoError::NoConsistentTask {
            action,
            observation,
        });
    }
    let mut posterior: Vec<f64> = weights.iter().map(|w| w / total).collect();
    if options.posterior_floor {
        for p in &mut posterior {
            *p = p.max(POSTERIOR_FLOOR);
        }
        let s: f64 = posterior.iter().sum();
        for p in &mut posterior {
            *p /= s;
        }
    }
    Ok(AtpoState {
        posterior: TaskPosterior(posterior),
        per_task_beliefs: beliefs,
        last_mixed_policy: None,
        last_action_probability: Some(action_prob),
        last_likelihoods: Some(rho),
    })
}

/// Per-action losses `ℓ_t(a | m*)` under the target task's belief.
///
/// The reference value is `max_a q(b, a)`, the value of the greedy policy
/// `π̂_{m*}` at its own belief, so losses are non-negative and vanish exactly
/// on the greedy support.
pub fn action_losses(state: &AtpoState, library: &TaskLibrary, target: usize) -> Vec<f64> {
    let t = &library.tasks()[target];
    let q = q_values(&t.pomdp, &t.policy, &state.per_task_beliefs[target]);
    let v = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    q.iter().map(|qa| v - qa).collect()
}

/// `ℓ_t(π̂_k | m*) = Σ_a π̂_k(a | b_{k,t}) ℓ_t(a | m*)` for every task `k`.
pub fn atpo_loss(state: &AtpoState, library: &TaskLibrary, target: usize) -> Vec<f64> {
    let per_action = action_losses(state, library, target);
    (0..library.len())
        .map(|k| {
            library
                .task_policy(k, &state.per_task_beliefs[k])
                .iter()
                .zip(&per_action)
                .map(|(p, l)| p * l)
                .sum()
        })
        .collect()
}

/// One recorded decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub action: usize,
    pub observation: usize,
    /// `p_t` before the update.
    pub posterior: Vec<f64>,
    pub mixed_policy: Vec<f64>,
    /// `π_t(a_t | h_t)`.
    pub action_probability: f64,
    /// `ℓ_t(π̂_k | m*)` per task.
    pub losses: Vec<f64>,
    pub reward: f64,
}

/// Complete decision trace of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub labels: Vec<String>,
    pub target: usize,
    pub steps: Vec<TraceStep>,
}

impl TraceRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// CSV export: `t,action,observation,p_<label>...,entropy,loss_<label>...,reward`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,action,observation");
        for l in &self.labels {
            out.push_str(&format!(",p_{l}"));
        }
        out.push_str(",entropy");
        for l in &self.labels {
            out.push_str(&format!(",loss_{l}"));
        }
        out.push_str(",reward\n");
        for s in &self.steps {
            out.push_str(&format!("{},{},{}", s.t, s.action, s.observation));
            for p in &s.posterior {
                out.push_str(&format!(",{p}"));
            }
            let h = posterior_entropy(&TaskPosterior(s.posterior.clone()));
            out.push_str(&format!(",{h}"));
            for l in &s.losses {
                out.push_str(&format!(",{l}"));
            }
            out.push_str(&format!(",{}\n", s.reward));
        }
        out
    }
}

/// Both sides of the regret inequality evaluated on one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub horizon: usize,
    /// `Σ_t L_t(p_t)`.
    pub lhs: f64,
    /// `Σ_t L_t(q)`.
    pub comparator_loss: f64,
    /// `√(2/T) Σ_t KL(q ‖ p_t)`; infinite when some `p_t` rules out a task
    /// that `q` supports.
    #[serde(with = "extended_f64")]
    pub kl_term: f64,
    /// `√(T/2) R_max² / (1-γ)²`.
    pub constant_term: f64,
    pub r_max: f64,
    pub holds: bool,
}

impl BoundReport {
    pub fn rhs(&self) -> f64 {
        self.comparator_loss + self.kl_term + self.constant_term
    }
}

/// JSON has no infinities; non-finite values travel as strings.
mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}

/// Slack allowed on the right-hand side.
pub const BOUND_TOL: f64 = 1e-6;

/// Evaluates `Σ L_t(p_t) ≤ Σ L_t(q) + √(2/T) Σ KL(q‖p_t) + √(T/2) R²/(1-γ)²`.
pub fn verify_bound(
    trace: &TraceRecord,
    q: &TaskPosterior,
    r_max: f64,
    discount: f64,
) -> BoundReport {
    let horizon = trace.len();
    let mut lhs = 0.0;
    let mut comparator_loss = 0.0;
    let mut kl_sum = 0.0;
    for s in &trace.steps {
        lhs += s
            .posterior
            .iter()
            .zip(&s.losses)
            .map(|(p, l)| p * l)
            .sum::<f64>();
        comparator_loss += q
            .probs()
            .iter()
            .zip(&s.losses)
            .map(|(p, l)| p * l)
            .sum::<f64>();
        kl_sum += kl_divergence(q.probs(), &s.posterior);
    }
    let t = horizon as f64;
    let (kl_term, constant_term) = if horizon == 0 {
        (0.0, 0.0)
    } else {
        (
            (2.0 / t).sqrt() * kl_sum,
            (t / 2.0).sqrt() * r_max * r_max / ((1.0 - discount) * (1.0 - discount)),
        )
    };
    let rhs = comparator_loss + kl_term + constant_term;
    BoundReport {
        horizon,
        lhs,
        comparator_loss,
        kl_term,
        constant_term,
        r_max,
        holds: lhs <= rhs + BOUND_TOL,
    }
}
