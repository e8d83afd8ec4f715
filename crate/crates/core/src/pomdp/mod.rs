//! Partially observable models: exact belief filtering, belief-space
//! value and Q queries over an alpha-vector value function, and the
//! point-based solver in [`perseus`].

mod perseus;
mod text;

pub use perseus::{perseus_solve, sample_belief_set, PerseusConfig, PerseusSolution};
pub use text::{parse_text_model, TextModelError};

use serde::{Deserialize, Serialize};

use crate::decision::{argmax_distribution, TabularMDP, TieBreak};
use crate::error::ModelError;
use crate::kernel::{check_distribution, Kernel};

/// Probability vector over the states of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        check_distribution(&probs)?;
        Ok(Self(probs))
    }

    pub fn point(num_states: usize, x: usize) -> Self {
        let mut p = vec![0.0; num_states];
        p[x] = 1.0;
        Self(p)
    }

    pub fn uniform(num_states: usize) -> Self {
        Self(vec![1.0 / num_states as f64; num_states])
    }

    /// Uniform over the listed states.
    pub fn uniform_over(num_states: usize, support: &[usize]) -> Result<Self, ModelError> {
        if support.is_empty() {
            return Err(ModelError::EmptyDistribution);
        }
        let mut p = vec![0.0; num_states];
        let w = 1.0 / support.len() as f64;
        for &x in support {
            p[x] += w;
        }
        Self::new(p)
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

    /// Lowest-index most likely state.
    pub fn most_likely_state(&self) -> usize {
        let mut best = 0;
        for (x, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = x;
            }
        }
        best
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// An MDP extended with an observation alphabet, per-action observation
/// rows `O[a][x'][z]`, and an initial belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPOMDP {
    base: TabularMDP,
    num_observations: usize,
    observation: Kernel,
    initial_belief: Belief,
}

impl TabularPOMDP {
    pub fn new(
        base: TabularMDP,
        observation: Kernel,
        initial_belief: Belief,
    ) -> Result<Self, ModelError> {
        if observation.num_actions() != base.num_actions() {
            return Err(ModelError::DimensionMismatch {
                what: "observation kernel actions",
                expected: base.num_actions(),
                found: observation.num_actions(),
            });
        }
        if observation.num_rows() != base.num_states() {
            return Err(ModelError::DimensionMismatch {
                what: "observation kernel states",
                expected: base.num_states(),
                found: observation.num_rows(),
            });
        }
        if initial_belief.len() != base.num_states() {
            return Err(ModelError::DimensionMismatch {
                what: "initial belief length",
                expected: base.num_states(),
                found: initial_belief.len(),
            });
        }
        Ok(Self {
            num_observations: observation.num_cols(),
            base,
            observation,
            initial_belief,
        })
    }

    /// Fully observable wrapper: observation `z = x'` with probability one.
    pub fn identity_observed(base: TabularMDP, initial_belief: Belief) -> Result<Self, ModelError> {
        let n = base.num_states();
        let rows = (0..base.num_actions() * n)
            .map(|r| vec![(r % n, 1.0)])
            .collect();
        let observation = Kernel::from_rows(base.num_actions(), n, n, rows)?;
        Self::new(base, observation, initial_belief)
    }

    pub fn base(&self) -> &TabularMDP {
        &self.base
    }

    pub fn num_states(&self) -> usize {
        self.base.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.base.num_actions()
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn observation(&self) -> &Kernel {
        &self.observation
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.initial_belief
    }

    pub fn discount(&self) -> f64 {
        self.base.discount()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.base.validate()?;
        self.observation.validate()?;
        check_distribution(self.initial_belief.probs())?;
        Self::new(
            self.base.clone(),
            self.observation.clone(),
            self.initial_belief.clone(),
        )
        .map(|_| ())
    }

    /// One-step prediction `Σ_x b(x) P(y|x,a)` as a dense vector.
    pub fn predict(&self, b: &Belief, a: usize) -> Vec<f64> {
        let mut pred = vec![0.0; self.num_states()];
        for (x, &bx) in b.probs().iter().enumerate() {
            if bx == 0.0 {
                continue;
            }
            for (y, p) in self.base.transition().entries(a, x) {
                pred[y] += bx * p;
            }
        }
        pred
    }

    /// Unnormalized successor beliefs `Σ_x b(x) P(y|x,a) O(z|y,a)` grouped by
    /// observation, as `(z, [(y, mass)])` with `z` ascending.
    pub fn split_by_observation(&self, b: &Belief, a: usize) -> Vec<(usize, Vec<(usize, f64)>)> {
        let pred = self.predict(b, a);
        let mut triples: Vec<(usize, usize, f64)> = Vec::new();
        for (y, &py) in pred.iter().enumerate() {
            if py == 0.0 {
                continue;
            }
            for (z, o) in self.observation.entries(a, y) {
                triples.push((z, y, py * o));
            }
        }
        triples.sort_by_key(|&(z, y, _)| (z, y));
        let mut groups: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        for (z, y, w) in triples {
            match groups.last_mut() {
                Some((gz, g)) if *gz == z => g.push((y, w)),
                _ => groups.push((z, vec![(y, w)])),
            }
        }
        groups
    }
}

/// Result of a Bayesian filter step.
#[derive(Debug, Clone, PartialEq)]
pub enum BeliefUpdate {
    /// Posterior belief and the pre-normalization mass `ρ ∈ (0, 1]`.
    Updated { belief: Belief, likelihood: f64 },
    /// The observation has zero probability under the model (`ρ = 0`).
    Impossible,
}

impl BeliefUpdate {
    pub fn likelihood(&self) -> f64 {
        match self {
            BeliefUpdate::Updated { likelihood, .. } => *likelihood,
            BeliefUpdate::Impossible => 0.0,
        }
    }

    pub fn into_belief(self) -> Option<Belief> {
        match self {
            BeliefUpdate::Updated { belief, .. } => Some(belief),
            BeliefUpdate::Impossible => None,
        }
    }
}

/// `Bel(b, a, z)` together with its normalization mass.
pub fn belief_update(pomdp: &TabularPOMDP, b: &Belief, a: usize, z: usize) -> BeliefUpdate {
    let mut next = pomdp.predict(b, a);
    let mut rho = 0.0;
    for (y, w) in next.iter_mut().enumerate() {
        if *w != 0.0 {
            *w *= pomdp.observation.prob(a, y, z);
            rho += *w;
        }
    }
    if rho <= 0.0 {
        return BeliefUpdate::Impossible;
    }
    for w in &mut next {
        *w /= rho;
    }
    BeliefUpdate::Updated {
        belief: Belief(next),
        likelihood: rho.min(1.0),
    }
}

/// A value hyperplane over states with the action that realizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub values: Vec<f64>,
    pub action: usize,
}

impl AlphaVector {
    #[inline]
    pub fn dot(&self, b: &[f64]) -> f64 {
        self.values.iter().zip(b).map(|(a, p)| a * p).sum()
    }

    #[inline]
    fn dot_sparse(&self, entries: &[(usize, f64)]) -> f64 {
        entries.iter().map(|&(y, w)| w * self.values[y]).sum()
    }
}

/// Piecewise-linear convex value function represented by alpha vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVectorPolicy {
    num_states: usize,
    vectors: Vec<AlphaVector>,
}

impl AlphaVectorPolicy {
    pub fn new(num_states: usize, vectors: Vec<AlphaVector>) -> Result<Self, ModelError> {
        if vectors.is_empty() {
            return Err(ModelError::EmptyDistribution);
        }
        for v in &vectors {
            if v.values.len() != num_states {
                return Err(ModelError::DimensionMismatch {
                    what: "alpha vector length",
                    expected: num_states,
                    found: v.values.len(),
                });
            }
        }
        Ok(Self {
            num_states,
            vectors,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn vectors(&self) -> &[AlphaVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Index of the lowest-index maximizing vector at `b`, with its value.
    pub fn best(&self, b: &Belief) -> (usize, f64) {
        best_for(&self.vectors, b.probs())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        Self::new(self.num_states, self.vectors.clone()).map(|_| ())
    }

    fn best_sparse(&self, entries: &[(usize, f64)]) -> f64 {
        self.vectors
            .iter()
            .map(|v| v.dot_sparse(entries))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn best_for(vectors: &[AlphaVector], b: &[f64]) -> (usize, f64) {
    let support: Vec<(usize, f64)> = b
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, p)| p != 0.0)
        .collect();
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in vectors.iter().enumerate() {
        let val = v.dot_sparse(&support);
        if val > best.1 {
            best = (i, val);
        }
    }
    best
}

/// `max_i ⟨α_i, b⟩`.
pub fn value_of(policy: &AlphaVectorPolicy, b: &Belief) -> f64 {
    policy.best(b).1
}

/// Belief-space Q value with `value_of` as the successor value.
pub fn q_value(pomdp: &TabularPOMDP, policy: &AlphaVectorPolicy, b: &Belief, a: usize) -> f64 {
    let immediate: f64 = b
        .probs()
        .iter()
        .enumerate()
        .map(|(x, &p)| {
            if p == 0.0 {
                0.0
            } else {
                p * pomdp.base().reward(x, a)
            }
        })
        .sum();
    // ρ_z · v*(Bel(b,a,z)) = max_i ⟨α_i, unnormalized successor⟩
    let future: f64 = pomdp
        .split_by_observation(b, a)
        .iter()
        .map(|(_, entries)| policy.best_sparse(entries))
        .sum();
    immediate + pomdp.discount() * future
}

/// Q values of every action at `b`.
pub fn q_values(pomdp: &TabularPOMDP, policy: &AlphaVectorPolicy, b: &Belief) -> Vec<f64> {
    (0..pomdp.num_actions())
        .map(|a| q_value(pomdp, policy, b, a))
        .collect()
}

/// Uniform distribution over the belief-space greedy actions.
pub fn greedy_belief_policy(
    pomdp: &TabularPOMDP,
    policy: &AlphaVectorPolicy,
    b: &Belief,
) -> Vec<f64> {
    argmax_distribution(&q_values(pomdp, policy, b), TieBreak::Uniform)
}
