//! Randomized point-based value iteration over a fixed belief set.
//!
//! Each round backs up randomly chosen beliefs that have not yet improved
//! until every belief's value is at least its value from the previous round,
//! so values at the sampled beliefs never decrease.

use std::collections::HashSet;

use rand::Rng;

use super::{belief_update, best_for, AlphaVector, AlphaVectorPolicy, Belief, TabularPOMDP};
use crate::sampling::{rng_from_seed, sample_discrete, sample_sparse};

/// Length of each random-exploration trajectory before restarting from the
/// initial belief.
const EXPLORATION_LENGTH: usize = 50;

/// Solver settings; `num_beliefs: None` selects [`PerseusConfig::default_belief_count`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PerseusConfig {
    pub num_beliefs: Option<usize>,
    pub improvement_tol: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for PerseusConfig {
    fn default() -> Self {
        Self {
            num_beliefs: None,
            improvement_tol: 1e-4,
            max_rounds: 200,
            seed: 0,
        }
    }
}

impl PerseusConfig {
    /// `10·√|X|`, capped at 2000.
    pub fn default_belief_count(num_states: usize) -> usize {
        ((10.0 * (num_states as f64).sqrt()).ceil() as usize).clamp(1, 2000)
    }

    pub fn belief_count(&self, num_states: usize) -> usize {
        self.num_beliefs
            .unwrap_or_else(|| Self::default_belief_count(num_states))
    }

    /// Samples a belief set and solves.
    pub fn solve(&self, pomdp: &TabularPOMDP) -> PerseusSolution {
        let beliefs = sample_belief_set(pomdp, self.belief_count(pomdp.num_states()), self.seed);
        perseus_solve(
            pomdp,
            beliefs,
            self.improvement_tol,
            self.max_rounds,
            self.seed,
        )
    }
}

/// Solver output plus the per-round value trace at the sampled beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct PerseusSolution {
    pub policy: AlphaVectorPolicy,
    pub beliefs: Vec<Belief>,
    /// `round_values[r][i]`: value at belief `i` after round `r` (round 0 is
    /// the initial lower bound).
    pub round_values: Vec<Vec<f64>>,
    pub converged: bool,
}

impl PerseusSolution {
    pub fn rounds(&self) -> usize {
        self.round_values.len() - 1
    }

    pub fn final_values(&self) -> &[f64] {
        self.round_values
            .last()
            .expect("round 0 is always recorded")
    }
}

/// Beliefs reachable from the initial belief under uniformly random actions.
///
/// The initial belief is always first. Exact duplicates are skipped, so
/// fewer than `n` beliefs come back when the reachable set is smaller.
pub fn sample_belief_set(pomdp: &TabularPOMDP, n: usize, seed: u64) -> Vec<Belief> {
    let n = n.max(1);
    let mut rng = rng_from_seed(seed);
    let b0 = pomdp.initial_belief().clone();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    seen.insert(bits(&b0));
    let mut out = vec![b0.clone()];
    let budget = 100 * n;
    let mut belief = b0.clone();
    let mut state = sample_discrete(b0.probs(), &mut rng);
    let mut t = 0;
    for _ in 0..budget {
        if out.len() >= n {
            break;
        }
        if t == EXPLORATION_LENGTH {
            belief = b0.clone();
            state = sample_discrete(b0.probs(), &mut rng);
            t = 0;
        }
        let a = rng.gen_range(0..pomdp.num_actions());
        let (cols, probs) = pomdp.base().transition().row(a, state);
        let next = sample_sparse(cols, probs, &mut rng);
        let (zc, zp) = pomdp.observation().row(a, next);
        let z = sample_sparse(zc, zp, &mut rng);
        let Some(b) = belief_update(pomdp, &belief, a, z).into_belief() else {
            // numerically impossible only if the sampled path has zero mass
            belief = b0.clone();
            state = sample_discrete(b0.probs(), &mut rng);
            t = 0;
            continue;
        };
        if seen.insert(bits(&b)) {
            out.push(b.clone());
        }
        belief = b;
        state = next;
        t += 1;
    }
    out
}

fn bits(b: &Belief) -> Vec<u64> {
    b.probs().iter().map(|p| p.to_bits()).collect()
}

/// Point-based solve over `beliefs`, starting from the constant lower bound
/// `R_min / (1 - γ)`.
pub fn perseus_solve(
    pomdp: &TabularPOMDP,
    beliefs: Vec<Belief>,
    improvement_tol: f64,
    max_rounds: usize,
    seed: u64,
) -> PerseusSolution {
    assert!(!beliefs.is_empty(), "perseus needs at least one belief");
    let n = pomdp.num_states();
    let gamma = pomdp.discount();
    let floor = pomdp.base().min_reward() / (1.0 - gamma);
    let mut vectors = vec![AlphaVector {
        values: vec![floor; n],
        action: 0,
    }];
    let supports: Vec<Vec<(usize, f64)>> = beliefs
        .iter()
        .map(|b| {
            b.probs()
                .iter()
                .copied()
                .enumerate()
                .filter(|&(_, p)| p != 0.0)
                .collect()
        })
        .collect();
    let values_under = |vs: &[AlphaVector]| -> Vec<f64> {
        supports
            .iter()
            .map(|s| {
                vs.iter()
                    .map(|v| v.dot_sparse(s))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    let mut rng = rng_from_seed(seed ^ 0x5045_5253_4555_53);
    let mut workspace = BackupWorkspace::new(pomdp);
    let mut round_values = vec![values_under(&vectors)];
    let mut converged = false;

    for _ in 0..max_rounds {
        let old = round_values.last().unwrap().clone();
        let mut new_vals = vec![f64::NEG_INFINITY; beliefs.len()];
        let mut next: Vec<AlphaVector> = Vec::new();
        let mut pending: Vec<usize> = (0..beliefs.len()).collect();
        let mut backed_up = vec![false; beliefs.len()];
        while !pending.is_empty() {
            let i = pending[rng.gen_range(0..pending.len())];
            backed_up[i] = true;
            let candidate = workspace.backup(pomdp, &vectors, &beliefs[i]);
            let chosen = if candidate.dot_sparse(&supports[i]) >= old[i] {
                candidate
            } else {
                vectors[best_for(&vectors, beliefs[i].probs()).0].clone()
            };
            for (j, s) in supports.iter().enumerate() {
                let v = chosen.dot_sparse(s);
                if v > new_vals[j] {
                    new_vals[j] = v;
                }
            }
            next.push(chosen);
            // Ties do not count as improvement: from a flat lower bound one
            // vector would otherwise retire every belief and stall the solve.
            pending.retain(|&j| !backed_up[j] && new_vals[j] <= old[j]);
        }
        prune(&mut next);
        let improvement = new_vals
            .iter()
            .zip(&old)
            .fold(0.0f64, |m, (nv, ov)| m.max(nv - ov));
        vectors = next;
        round_values.push(new_vals);
        if improvement <= improvement_tol {
            converged = true;
            break;
        }
    }
    log::debug!(
        "perseus: {} rounds, {} vectors, converged={converged}",
        round_values.len() - 1,
        vectors.len()
    );
    PerseusSolution {
        policy: AlphaVectorPolicy::new(n, vectors).expect("non-empty, correctly sized"),
        beliefs,
        round_values,
        converged,
    }
}

/// Drops exact duplicates and vectors pointwise dominated by another.
fn prune(vectors: &mut Vec<AlphaVector>) {
    let mut keep = vec![true; vectors.len()];
    for i in 0..vectors.len() {
        if !keep[i] {
            continue;
        }
        for j in 0..vectors.len() {
            if i == j || !keep[j] {
                continue;
            }
            let (vi, vj) = (&vectors[i].values, &vectors[j].values);
            let j_dominates = vj.iter().zip(vi).all(|(a, b)| a >= b);
            if j_dominates && (vi != vj || j < i) {
                keep[i] = false;
                break;
            }
        }
    }
    let mut k = keep.into_iter();
    vectors.retain(|_| k.next().unwrap());
}

struct BackupWorkspace {
    choice: Vec<usize>,
    future: Vec<f64>,
}

impl BackupWorkspace {
    fn new(pomdp: &TabularPOMDP) -> Self {
        Self {
            choice: vec![0; pomdp.num_observations()],
            future: vec![0.0; pomdp.num_states()],
        }
    }

    /// Point-based backup of `b` against `vectors`.
    fn backup(&mut self, pomdp: &TabularPOMDP, vectors: &[AlphaVector], b: &Belief) -> AlphaVector {
        let n = pomdp.num_states();
        let gamma = pomdp.discount();
        let fallback = best_for(vectors, b.probs()).0;
        let mut best: Option<(f64, AlphaVector)> = None;
        for a in 0..pomdp.num_actions() {
            self.choice.fill(fallback);
            for (z, entries) in pomdp.split_by_observation(b, a) {
                let mut arg = (0, f64::NEG_INFINITY);
                for (i, v) in vectors.iter().enumerate() {
                    let val = v.dot_sparse(&entries);
                    if val > arg.1 {
                        arg = (i, val);
                    }
                }
                self.choice[z] = arg.0;
            }
            for y in 0..n {
                self.future[y] = pomdp
                    .observation()
                    .entries(a, y)
                    .map(|(z, o)| o * vectors[self.choice[z]].values[y])
                    .sum();
            }
            let values: Vec<f64> = (0..n)
                .map(|x| {
                    let ev: f64 = pomdp
                        .base()
                        .transition()
                        .entries(a, x)
                        .map(|(y, p)| p * self.future[y])
                        .sum();
                    pomdp.base().reward(x, a) + gamma * ev
                })
                .collect();
            let alpha = AlphaVector { values, action: a };
            let val = alpha.dot(b.probs());
            if best.as_ref().map_or(true, |(bv, _)| val > *bv) {
                best = Some((val, alpha));
            }
        }
        best.expect("at least one action").1
    }
}
