//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use atpo_core::atpo::{
    atpo_init, atpo_update, mixed_policy, AtpoOptions, AtpoState, Task, TaskLibrary, TaskPosterior,
};
use atpo_core::decision::TabularMDP;
use atpo_core::environments::{BuiltTask, Cell, NightPursuitTask, SimState};
use atpo_core::kernel::Kernel;
use atpo_core::pomdp::{AlphaVector, AlphaVectorPolicy, Belief, TabularPOMDP};
use atpo_core::sampling::{rng_from_seed, sample_discrete};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Random distribution of length `n` with roughly a third of the entries
/// forced to zero (at least one entry stays positive).
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let keep = rng.gen_range(0..n);
    let mut w: Vec<f64> = (0..n)
        .map(|i| {
            if i != keep && rng.gen_bool(0.33) {
                0.0
            } else {
                rng.gen_range(0.05..1.0)
            }
        })
        .collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

pub fn random_pomdp<R: Rng>(
    rng: &mut R,
    states: usize,
    actions: usize,
    observations: usize,
) -> TabularPOMDP {
    let t: Vec<Vec<Vec<f64>>> = (0..actions)
        .map(|_| {
            (0..states)
                .map(|_| random_distribution(rng, states))
                .collect()
        })
        .collect();
    let o: Vec<Vec<Vec<f64>>> = (0..actions)
        .map(|_| {
            (0..states)
                .map(|_| random_distribution(rng, observations))
                .collect()
        })
        .collect();
    let reward = (0..states * actions)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let base = TabularMDP::new(Kernel::from_dense(&t).unwrap(), reward, 0.95).unwrap();
    let b0 = Belief::new(random_distribution(rng, states)).unwrap();
    TabularPOMDP::new(base, Kernel::from_dense(&o).unwrap(), b0).unwrap()
}

/// Samples an action/observation history of length `len` from the model
/// itself, so every observation has positive probability.
pub fn sample_history<R: Rng>(
    rng: &mut R,
    pomdp: &TabularPOMDP,
    len: usize,
) -> Vec<(usize, usize)> {
    let mut x = sample_discrete(pomdp.initial_belief().probs(), rng);
    (0..len)
        .map(|_| {
            let a = rng.gen_range(0..pomdp.num_actions());
            x = sample_discrete(&pomdp.base().transition().dense_row(a, x), rng);
            let z = sample_discrete(&pomdp.observation().dense_row(a, x), rng);
            (a, z)
        })
        .collect()
}

/// Unnormalized filtering posterior by explicit enumeration of every state
/// trajectory `x_0 … x_T`: entry `y` is
/// `Σ b0(x_0) Π_t P(x_t | x_{t-1}, a_t) O(z_t | x_t, a_t)` over paths ending
/// in `y`. Its sum is the probability of the observations given the actions.
pub fn enumerate_joint(pomdp: &TabularPOMDP, history: &[(usize, usize)]) -> Vec<f64> {
    let n = pomdp.num_states();
    let mut out = vec![0.0; n];
    let mut path = Vec::with_capacity(history.len() + 1);
    for x0 in 0..n {
        let w = pomdp.initial_belief().probs()[x0];
        path.clear();
        path.push(x0);
        extend(pomdp, history, &mut path, w, &mut out);
    }
    out
}

fn extend(
    pomdp: &TabularPOMDP,
    history: &[(usize, usize)],
    path: &mut Vec<usize>,
    weight: f64,
    out: &mut [f64],
) {
    if weight == 0.0 {
        return;
    }
    let t = path.len() - 1;
    let last = path[t];
    if t == history.len() {
        out[last] += weight;
        return;
    }
    let (a, z) = history[t];
    for y in 0..pomdp.num_states() {
        let w =
            weight * pomdp.base().transition().prob(a, last, y) * pomdp.observation().prob(a, y, z);
        path.push(y);
        extend(pomdp, history, path, w, out);
        path.pop();
    }
}

/// Night-time Pursuit on a bounded 3×3 grid with preys in opposite corners.
pub fn night_3x3(epsilon: f64) -> (NightPursuitTask, BuiltTask) {
    let task = NightPursuitTask::new([Cell::new(0, 0), Cell::new(2, 2)], 3, 3, epsilon).unwrap();
    let built = task.build().unwrap();
    (task, built)
}

/// Breadth-first distance (in steps) from every state to the absorbing goal
/// set of a deterministic MDP; `None` when unreachable.
pub fn bfs_steps_to_goal(mdp: &TabularMDP, goal: impl Fn(usize) -> bool) -> Vec<Option<usize>> {
    let n = mdp.num_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for x in 0..n {
        for a in 0..mdp.num_actions() {
            for (y, p) in mdp.transition().entries(a, x) {
                assert!(p == 1.0, "bfs oracle needs deterministic dynamics");
                preds[y].push(x);
            }
        }
    }
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    for x in 0..n {
        if goal(x) {
            dist[x] = Some(0);
            queue.push_back(x);
        }
    }
    while let Some(y) = queue.pop_front() {
        let d = dist[y].unwrap();
        for &x in &preds[y] {
            if dist[x].is_none() {
                dist[x] = Some(d + 1);
                queue.push_back(x);
            }
        }
    }
    dist
}

/// Pearson chi-squared goodness-of-fit of `counts` against `expected`
/// probabilities. Cells with expected count below 5 are pooled; a count in
/// a zero-probability cell yields `p = 0`.
pub fn chi_squared_p(
    counts: &HashMap<usize, u64>,
    expected: &HashMap<usize, f64>,
    total: u64,
) -> f64 {
    if counts
        .keys()
        .any(|k| expected.get(k).copied().unwrap_or(0.0) == 0.0)
    {
        return 0.0;
    }
    let n = total as f64;
    let mut stat = 0.0;
    let mut cells = 0;
    let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
    for (k, &p) in expected {
        let e = p * n;
        let o = counts.get(k).copied().unwrap_or(0) as f64;
        if e < 5.0 {
            pool_obs += o;
            pool_exp += e;
        } else {
            stat += (o - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp).powi(2) / pool_exp;
        cells += 1;
    }
    if cells <= 1 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

/// Simulates `samples` steps from state `x` under action `a` and returns the
/// chi-squared p-value of the joint `(x', z)` frequencies against
/// `T(x'|x,a)·O(z|x',a)` of the built model.
pub fn model_agreement_p(built: &BuiltTask, x: usize, a: usize, samples: u64, seed: u64) -> f64 {
    let pomdp = &built.pomdp;
    let nz = pomdp.num_observations();
    let mut expected = HashMap::new();
    for (y, p) in pomdp.base().transition().entries(a, x) {
        for (z, o) in pomdp.observation().entries(a, y) {
            *expected.entry(y * nz + z).or_insert(0.0) += p * o;
        }
    }
    let mut rng = rng_from_seed(seed);
    let start = SimState {
        index: x,
        step: 0,
        done: false,
    };
    let mut counts: HashMap<usize, u64> = HashMap::new();
    for _ in 0..samples {
        let out = built.simulator.step(&start, a, &mut rng).unwrap();
        *counts
            .entry(out.next.index * nz + out.observation)
            .or_insert(0) += 1;
    }
    chi_squared_p(&counts, &expected, samples)
}

/// Two actions over the two-state filter example (`T₀ = [[0.9,0.1],[0.2,0.8]]`,
/// `O₀ = [[0.7,0.3],[0.4,0.6]]`), with a second action added.
pub const TWO_T: [[[f64; 2]; 2]; 2] = [[[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.6, 0.4]]];
pub const TWO_O: [[[f64; 2]; 2]; 2] = [[[0.7, 0.3], [0.4, 0.6]], [[0.5, 0.5], [0.1, 0.9]]];
/// `R[x][a]`.
pub const TWO_R: [[f64; 2]; 2] = [[1.0, 0.2], [-1.0, 0.5]];

pub fn two_action_model() -> TabularPOMDP {
    two_action_model_with(TWO_O, Belief::new(vec![0.3, 0.7]).unwrap())
}

pub fn two_action_model_with(o: [[[f64; 2]; 2]; 2], b0: Belief) -> TabularPOMDP {
    let dense = |k: [[[f64; 2]; 2]; 2]| -> Vec<Vec<Vec<f64>>> {
        k.iter()
            .map(|m| m.iter().map(|r| r.to_vec()).collect())
            .collect()
    };
    let reward = vec![TWO_R[0][0], TWO_R[0][1], TWO_R[1][0], TWO_R[1][1]];
    let base = TabularMDP::new(Kernel::from_dense(&dense(TWO_T)).unwrap(), reward, 0.95).unwrap();
    TabularPOMDP::new(base, Kernel::from_dense(&dense(o)).unwrap(), b0).unwrap()
}

/// One-step expectimax on the two-action model with `alphas` as the leaf
/// evaluator, written out with plain arrays.
pub fn expectimax_q_with(o: [[[f64; 2]; 2]; 2], b: [f64; 2], a: usize, alphas: &[[f64; 2]]) -> f64 {
    let mut q = b[0] * TWO_R[0][a] + b[1] * TWO_R[1][a];
    for z in 0..2 {
        let mut w = [0.0; 2];
        for x in 0..2 {
            for y in 0..2 {
                w[y] += b[x] * TWO_T[a][x][y] * o[a][y][z];
            }
        }
        let rho = w[0] + w[1];
        if rho > 0.0 {
            let leaf = alphas
                .iter()
                .map(|al| (al[0] * w[0] + al[1] * w[1]) / rho)
                .fold(f64::NEG_INFINITY, f64::max);
            q += 0.95 * rho * leaf;
        }
    }
    q
}

pub fn expectimax_q(b: [f64; 2], a: usize, alphas: &[[f64; 2]]) -> f64 {
    expectimax_q_with(TWO_O, b, a, alphas)
}

pub fn task(label: &str, pomdp: TabularPOMDP, alphas: Vec<AlphaVector>) -> Task {
    let n = pomdp.num_states();
    Task {
        label: label.into(),
        pomdp: Arc::new(pomdp),
        policy: Arc::new(AlphaVectorPolicy::new(n, alphas).unwrap()),
    }
}

pub fn random_alphas<R: Rng>(rng: &mut R, n: usize, actions: usize) -> Vec<AlphaVector> {
    (0..rng.gen_range(1..=3))
        .map(|_| AlphaVector {
            values: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            action: rng.gen_range(0..actions),
        })
        .collect()
}

/// Library of random tasks over shared action and observation alphabets.
pub fn random_library(seed: u64, k: usize, na: usize, nz: usize) -> (TaskLibrary, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = (0..k)
        .map(|i| {
            let n = rng.gen_range(1..=9);
            let p = random_pomdp(&mut rng, n, na, nz);
            let alphas = random_alphas(&mut rng, n, na);
            task(&format!("t{i}"), p, alphas)
        })
        .collect();
    (TaskLibrary::new(tasks).unwrap(), rng)
}

/// Runs the update over `history`, storing the mixed policy before each step
/// the way an acting agent would.
pub fn filter_history(
    lib: &TaskLibrary,
    prior: Option<Vec<f64>>,
    history: &[(usize, usize)],
) -> AtpoState {
    let prior = prior.map(|p| TaskPosterior::new(p).unwrap());
    let mut state = atpo_init(lib, prior).unwrap();
    for &(a, z) in history {
        state.last_mixed_policy = Some(mixed_policy(&state, lib));
        state = atpo_update(&state, lib, a, z, &AtpoOptions::default()).unwrap();
    }
    state
}

/// `P(m | h) ∝ P(m) · P(z_{1:T} | a_{1:T}, m)` with the likelihood taken
/// from trajectory enumeration.
pub fn brute_posterior(lib: &TaskLibrary, prior: &[f64], history: &[(usize, usize)]) -> Vec<f64> {
    let w: Vec<f64> = lib
        .tasks()
        .iter()
        .zip(prior)
        .map(|(t, p)| p * enumerate_joint(&t.pomdp, history).iter().sum::<f64>())
        .collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}
