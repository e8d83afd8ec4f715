//! Finite MDPs and MMDPs: value iteration, greedy policy extraction, policy
//! evaluation, and reduction of an MMDP with a fixed teammate policy to the
//! single-agent MDP seen by the ad hoc agent.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, SolveError};
use crate::kernel::{check_distribution, Kernel};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Absolute tolerance under which two action values count as tied.
pub const TIE_TOL: f64 = 1e-9;

/// Finite discounted MDP with transition rows `T[a][x]` and rewards `R[x][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMDP {
    num_states: usize,
    num_actions: usize,
    transition: Kernel,
    /// Row-major `R[x][a]`.
    reward: Vec<f64>,
    discount: f64,
}

impl TabularMDP {
    pub fn new(transition: Kernel, reward: Vec<f64>, discount: f64) -> Result<Self, ModelError> {
        let num_actions = transition.num_actions();
        let num_states = transition.num_rows();
        if transition.num_cols() != num_states {
            return Err(ModelError::DimensionMismatch {
                what: "transition successor count",
                expected: num_states,
                found: transition.num_cols(),
            });
        }
        if reward.len() != num_states * num_actions {
            return Err(ModelError::DimensionMismatch {
                what: "reward entries",
                expected: num_states * num_actions,
                found: reward.len(),
            });
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(ModelError::InvalidDiscount(discount));
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            reward,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn transition(&self) -> &Kernel {
        &self.transition
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    #[inline]
    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.reward[x * self.num_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Smallest one-step expected reward.
    pub fn min_reward(&self) -> f64 {
        self.reward.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute one-step expected reward.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Re-checks all invariants, e.g. after loading from disk.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.transition.validate()?;
        Self::new(self.transition.clone(), self.reward.clone(), self.discount).map(|_| ())
    }

    /// One Bellman backup of `v`, writing `q[x][a]` and returning the new `v`.
    fn backup(&self, v: &[f64], q: &mut [f64]) -> Vec<f64> {
        let (n, m) = (self.num_states, self.num_actions);
        let mut out = vec![f64::NEG_INFINITY; n];
        for x in 0..n {
            for a in 0..m {
                let ev: f64 = self.transition.entries(a, x).map(|(y, p)| p * v[y]).sum();
                let qa = self.reward(x, a) + self.discount * ev;
                q[x * m + a] = qa;
                if qa > out[x] {
                    out[x] = qa;
                }
            }
        }
        out
    }
}

/// Finite MMDP: joint actions are the mixed-radix product of the per-agent
/// action sets with agent 0 as the most significant digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMMDP {
    num_states: usize,
    per_agent_actions: Vec<usize>,
    joint_transition: Kernel,
    /// Row-major `R[x][joint]`.
    reward: Vec<f64>,
    discount: f64,
}

impl TabularMMDP {
    pub fn new(
        per_agent_actions: Vec<usize>,
        joint_transition: Kernel,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self, ModelError> {
        let joint: usize = per_agent_actions.iter().product();
        if per_agent_actions.is_empty() || joint != joint_transition.num_actions() {
            return Err(ModelError::DimensionMismatch {
                what: "joint action count",
                expected: joint,
                found: joint_transition.num_actions(),
            });
        }
        let num_states = joint_transition.num_rows();
        if joint_transition.num_cols() != num_states {
            return Err(ModelError::DimensionMismatch {
                what: "joint transition successor count",
                expected: num_states,
                found: joint_transition.num_cols(),
            });
        }
        if reward.len() != num_states * joint {
            return Err(ModelError::DimensionMismatch {
                what: "joint reward entries",
                expected: num_states * joint,
                found: reward.len(),
            });
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(ModelError::InvalidDiscount(discount));
        }
        Ok(Self {
            num_states,
            per_agent_actions,
            joint_transition,
            reward,
            discount,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.per_agent_actions.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn per_agent_actions(&self) -> &[usize] {
        &self.per_agent_actions
    }

    pub fn num_joint_actions(&self) -> usize {
        self.joint_transition.num_actions()
    }

    pub fn joint_transition(&self) -> &Kernel {
        &self.joint_transition
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self, x: usize, joint: usize) -> f64 {
        self.reward[x * self.num_joint_actions() + joint]
    }

    /// Joint index of the per-agent actions `actions`.
    pub fn joint_index(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.per_agent_actions.len());
        actions
            .iter()
            .zip(&self.per_agent_actions)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    /// Per-agent actions of joint index `joint`.
    pub fn split_joint(&self, mut joint: usize) -> Vec<usize> {
        let mut out = vec![0; self.per_agent_actions.len()];
        for (slot, &n) in out.iter_mut().zip(&self.per_agent_actions).rev() {
            *slot = joint % n;
            joint /= n;
        }
        out
    }

    /// Number of joint actions of all agents except `ad_hoc_index`.
    pub fn teammate_action_count(&self, ad_hoc_index: usize) -> usize {
        self.per_agent_actions
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != ad_hoc_index)
            .map(|(_, &n)| n)
            .product()
    }

    /// Joint index assembled from the ad hoc action and a reduced teammate
    /// joint index (teammates in agent order, most significant first).
    pub fn compose(&self, ad_hoc_index: usize, own: usize, mut teammates: usize) -> usize {
        let mut actions = vec![0; self.per_agent_actions.len()];
        for (i, &n) in self.per_agent_actions.iter().enumerate().rev() {
            if i == ad_hoc_index {
                actions[i] = own;
            } else {
                actions[i] = teammates % n;
                teammates /= n;
            }
        }
        self.joint_index(&actions)
    }
}

/// Stochastic policy `π[x][a]` over a finite state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StatePolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.len() != num_states * num_actions {
            return Err(ModelError::DimensionMismatch {
                what: "policy entries",
                expected: num_states * num_actions,
                found: probs.len(),
            });
        }
        for x in 0..num_states {
            check_distribution(&probs[x * num_actions..(x + 1) * num_actions])?;
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    /// Deterministic policy choosing `actions[x]` in state `x`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Result<Self, ModelError> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (x, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(ModelError::DimensionMismatch {
                    what: "deterministic policy action",
                    expected: num_actions,
                    found: a,
                });
            }
            probs[x * num_actions + a] = 1.0;
        }
        Ok(Self {
            num_states: actions.len(),
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.num_actions..(x + 1) * self.num_actions]
    }

    #[inline]
    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.num_actions + a]
    }
}

/// Teammate policy that may react to the ad hoc agent's simultaneous action:
/// one [`StatePolicy`] per ad hoc action. State-only teammates repeat the
/// same policy for every ad hoc action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsivePolicy {
    per_own_action: Vec<StatePolicy>,
}

impl ResponsivePolicy {
    pub fn new(per_own_action: Vec<StatePolicy>) -> Result<Self, ModelError> {
        let first = per_own_action
            .first()
            .ok_or(ModelError::EmptyDistribution)?;
        for p in &per_own_action {
            if p.num_states() != first.num_states() || p.num_actions() != first.num_actions() {
                return Err(ModelError::DimensionMismatch {
                    what: "responsive policy shape",
                    expected: first.num_states() * first.num_actions(),
                    found: p.num_states() * p.num_actions(),
                });
            }
        }
        Ok(Self { per_own_action })
    }

    pub fn state_only(policy: StatePolicy, num_own_actions: usize) -> Self {
        Self {
            per_own_action: vec![policy; num_own_actions],
        }
    }

    pub fn num_own_actions(&self) -> usize {
        self.per_own_action.len()
    }

    pub fn num_states(&self) -> usize {
        self.per_own_action[0].num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.per_own_action[0].num_actions()
    }

    /// Teammate action distribution at `x` given the ad hoc action `own`.
    pub fn row(&self, x: usize, own: usize) -> &[f64] {
        self.per_own_action[own].row(x)
    }

    pub fn prob(&self, x: usize, own: usize, teammate: usize) -> f64 {
        self.per_own_action[own].prob(x, teammate)
    }
}

/// State values with the optional Q cache `q[x][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateValueFunction {
    pub values: Vec<f64>,
    pub q: Option<Vec<f64>>,
    pub num_actions: usize,
}

impl StateValueFunction {
    pub fn q_row(&self, x: usize) -> Option<&[f64]> {
        self.q
            .as_ref()
            .map(|q| &q[x * self.num_actions..(x + 1) * self.num_actions])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    /// Uniform mixture over all maximizing actions.
    #[default]
    Uniform,
    /// Lowest-index maximizer only.
    LowestIndex,
}

/// Value iteration; returns values whose Bellman residual is at most `tol`.
pub fn value_iteration(
    mdp: &TabularMDP,
    tol: f64,
    max_iters: usize,
) -> Result<StateValueFunction, SolveError> {
    value_iteration_traced(mdp, tol, max_iters).map(|(vf, _)| vf)
}

/// Value iteration that also returns the sup-norm distance between successive
/// iterates.
pub fn value_iteration_traced(
    mdp: &TabularMDP,
    tol: f64,
    max_iters: usize,
) -> Result<(StateValueFunction, Vec<f64>), SolveError> {
    if !(tol > 0.0) {
        return Err(SolveError::InvalidTolerance(tol));
    }
    let mut v = vec![0.0; mdp.num_states()];
    let mut q = vec![0.0; mdp.num_states() * mdp.num_actions()];
    let mut deltas = Vec::new();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = mdp.backup(&v, &mut q);
        residual = sup_distance(&next, &v);
        deltas.push(residual);
        v = next;
        // the residual of the new iterate is at most γ times the step taken
        if residual <= tol {
            return Ok((
                StateValueFunction {
                    values: v,
                    q: Some(q),
                    num_actions: mdp.num_actions(),
                },
                deltas,
            ));
        }
    }
    Err(SolveError::NotConverged {
        iterations: max_iters,
        residual,
    })
}

/// Bellman residual `max_x |v[x] - max_a (R + γ T v)|`.
pub fn bellman_residual(mdp: &TabularMDP, v: &[f64]) -> f64 {
    let mut q = vec![0.0; mdp.num_states() * mdp.num_actions()];
    sup_distance(&mdp.backup(v, &mut q), v)
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Greedy policy from the Q cache of `vf`.
pub fn greedy_policy(vf: &StateValueFunction, tie: TieBreak) -> Result<StatePolicy, ModelError> {
    let q =
        vf.q.as_ref()
            .ok_or(ModelError::Corrupt("value function has no Q cache"))?;
    let m = vf.num_actions;
    let n = vf.values.len();
    let mut probs = vec![0.0; n * m];
    for x in 0..n {
        let row = argmax_distribution(&q[x * m..(x + 1) * m], tie);
        probs[x * m..(x + 1) * m].copy_from_slice(&row);
    }
    StatePolicy::new(n, m, probs)
}

/// Distribution over the maximizers of `values` (ties within [`TIE_TOL`]).
pub fn argmax_distribution(values: &[f64], tie: TieBreak) -> Vec<f64> {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; values.len()];
    match tie {
        TieBreak::LowestIndex => {
            let i = values
                .iter()
                .position(|&v| v >= best - TIE_TOL)
                .unwrap_or(0);
            out[i] = 1.0;
        }
        TieBreak::Uniform => {
            let count = values.iter().filter(|&&v| v >= best - TIE_TOL).count();
            let share = 1.0 / count as f64;
            for (o, &v) in out.iter_mut().zip(values) {
                if v >= best - TIE_TOL {
                    *o = share;
                }
            }
        }
    }
    out
}

/// Iterative policy evaluation of `policy` on `mdp`.
pub fn evaluate_policy(
    mdp: &TabularMDP,
    policy: &StatePolicy,
    tol: f64,
) -> Result<StateValueFunction, SolveError> {
    evaluate_policy_with_limit(mdp, policy, tol, DEFAULT_MAX_ITERS)
}

pub fn evaluate_policy_with_limit(
    mdp: &TabularMDP,
    policy: &StatePolicy,
    tol: f64,
    max_iters: usize,
) -> Result<StateValueFunction, SolveError> {
    if !(tol > 0.0) {
        return Err(SolveError::InvalidTolerance(tol));
    }
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(ModelError::DimensionMismatch {
            what: "policy shape",
            expected: mdp.num_states() * mdp.num_actions(),
            found: policy.num_states() * policy.num_actions(),
        }
        .into());
    }
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; n * m];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let mut next = vec![0.0; n];
        for x in 0..n {
            for a in 0..m {
                let ev: f64 = mdp.transition.entries(a, x).map(|(y, p)| p * v[y]).sum();
                let qa = mdp.reward(x, a) + mdp.discount * ev;
                q[x * m + a] = qa;
                next[x] += policy.prob(x, a) * qa;
            }
        }
        residual = sup_distance(&next, &v);
        v = next;
        if residual <= tol {
            return Ok(StateValueFunction {
                values: v,
                q: Some(q),
                num_actions: m,
            });
        }
    }
    Err(SolveError::NotConverged {
        iterations: max_iters,
        residual,
    })
}

/// Folds a fixed teammate policy into an MMDP, yielding the MDP faced by agent
/// `ad_hoc_index`.
pub fn reduce_mmdp(
    mmdp: &TabularMMDP,
    ad_hoc_index: usize,
    teammate_policy: &StatePolicy,
) -> Result<TabularMDP, ModelError> {
    if ad_hoc_index >= mmdp.num_agents() {
        return Err(ModelError::DimensionMismatch {
            what: "ad hoc agent index",
            expected: mmdp.num_agents(),
            found: ad_hoc_index,
        });
    }
    let own = mmdp.per_agent_actions()[ad_hoc_index];
    let responsive = ResponsivePolicy::state_only(teammate_policy.clone(), own);
    reduce_mmdp_responsive(mmdp, ad_hoc_index, &responsive)
}

/// [`reduce_mmdp`] for teammates whose action distribution may depend on the
/// ad hoc agent's simultaneous action.
pub fn reduce_mmdp_responsive(
    mmdp: &TabularMMDP,
    ad_hoc_index: usize,
    teammate_policy: &ResponsivePolicy,
) -> Result<TabularMDP, ModelError> {
    if ad_hoc_index >= mmdp.num_agents() {
        return Err(ModelError::DimensionMismatch {
            what: "ad hoc agent index",
            expected: mmdp.num_agents(),
            found: ad_hoc_index,
        });
    }
    let own = mmdp.per_agent_actions()[ad_hoc_index];
    let team = mmdp.teammate_action_count(ad_hoc_index);
    let n = mmdp.num_states();
    if teammate_policy.num_actions() != team
        || teammate_policy.num_states() != n
        || teammate_policy.num_own_actions() != own
    {
        return Err(ModelError::DimensionMismatch {
            what: "teammate policy over reduced joint actions",
            expected: n * team * own,
            found: teammate_policy.num_states()
                * teammate_policy.num_actions()
                * teammate_policy.num_own_actions(),
        });
    }
    let mut rows = Vec::with_capacity(own * n);
    let mut reward = vec![0.0; n * own];
    for a in 0..own {
        for x in 0..n {
            let mut row = Vec::new();
            let mut r = 0.0;
            for (b, &w) in teammate_policy.row(x, a).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let joint = mmdp.compose(ad_hoc_index, a, b);
                row.extend(
                    mmdp.joint_transition()
                        .entries(joint, x)
                        .map(|(y, p)| (y, w * p)),
                );
                r += w * mmdp.reward(x, joint);
            }
            reward[x * own + a] = r;
            rows.push(row);
        }
    }
    let kernel = Kernel::from_rows(own, n, n, rows)?;
    TabularMDP::new(kernel, reward, mmdp.discount())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_state(r: f64) -> TabularMDP {
        TabularMDP::new(
            Kernel::from_dense(&[vec![vec![1.0]]]).unwrap(),
            vec![r],
            0.95,
        )
        .unwrap()
    }

    #[test]
    fn geometric_series_value() {
        let vf = value_iteration(&single_state(1.0), DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
        assert_abs_diff_eq!(vf.values[0], 20.0, epsilon = 1e-6);
    }

    #[test]
    fn one_step_cost_chain() {
        // state 0 moves to absorbing goal 1 at cost 1
        let t = Kernel::from_dense(&[vec![vec![0.0, 1.0], vec![0.0, 1.0]]]).unwrap();
        let mdp = TabularMDP::new(t, vec![-1.0, 0.0], 0.95).unwrap();
        let vf = value_iteration(&mdp, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
        assert_abs_diff_eq!(vf.values[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vf.values[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn non_convergence_reports_residual() {
        let err = value_iteration(&single_state(1.0), 1e-12, 3).unwrap_err();
        match err {
            SolveError::NotConverged {
                iterations,
                residual,
            } => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_discount_and_tolerance() {
        let t = Kernel::from_dense(&[vec![vec![1.0]]]).unwrap();
        assert!(matches!(
            TabularMDP::new(t, vec![0.0], 1.0),
            Err(ModelError::InvalidDiscount(_))
        ));
        assert!(matches!(
            value_iteration(&single_state(0.0), 0.0, 10),
            Err(SolveError::InvalidTolerance(_))
        ));
    }

    #[test]
    fn greedy_splits_ties() {
        let vf = StateValueFunction {
            values: vec![3.0, 5.0],
            q: Some(vec![1.0, 3.0, 3.0, 5.0, 2.0, 2.0]),
            num_actions: 3,
        };
        let pi = greedy_policy(&vf, TieBreak::Uniform).unwrap();
        assert_eq!(pi.row(0), &[0.0, 0.5, 0.5]);
        assert_eq!(pi.row(1), &[1.0, 0.0, 0.0]);
        let pi = greedy_policy(&vf, TieBreak::LowestIndex).unwrap();
        assert_eq!(pi.row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn greedy_two_actions() {
        let vf = StateValueFunction {
            values: vec![5.0],
            q: Some(vec![5.0, 2.0]),
            num_actions: 2,
        };
        assert_eq!(
            greedy_policy(&vf, TieBreak::Uniform).unwrap().row(0),
            &[1.0, 0.0]
        );
    }

    #[test]
    fn greedy_needs_q_cache() {
        let vf = StateValueFunction {
            values: vec![0.0],
            q: None,
            num_actions: 1,
        };
        assert!(greedy_policy(&vf, TieBreak::Uniform).is_err());
    }

    #[test]
    fn uniform_policy_on_single_state() {
        let mdp = single_state(1.0);
        let vf = evaluate_policy(&mdp, &StatePolicy::uniform(1, 1), DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(vf.values[0], 20.0, epsilon = 1e-6);
    }

    fn two_agent_mmdp() -> TabularMMDP {
        // 2 states, ad hoc agent has 2 actions, teammate has 2 actions
        let k = |a: usize, b: usize| -> Vec<Vec<f64>> {
            let p = 0.1 + 0.2 * a as f64 + 0.3 * b as f64;
            vec![vec![p, 1.0 - p], vec![1.0 - p / 2.0, p / 2.0]]
        };
        let dense = vec![k(0, 0), k(0, 1), k(1, 0), k(1, 1)];
        let reward = (0..8).map(|i| i as f64).collect();
        TabularMMDP::new(vec![2, 2], Kernel::from_dense(&dense).unwrap(), reward, 0.9).unwrap()
    }

    #[test]
    fn joint_index_round_trip() {
        let m = TabularMMDP::new(
            vec![2, 3, 4],
            Kernel::from_dense(&vec![vec![vec![1.0]]; 24]).unwrap(),
            vec![0.0; 24],
            0.5,
        )
        .unwrap();
        for j in 0..24 {
            assert_eq!(m.joint_index(&m.split_joint(j)), j);
        }
        assert_eq!(m.teammate_action_count(1), 8);
        // ad hoc agent 1 takes 2; teammates (agent 0, agent 2) = (1, 3) → reduced 1*4+3
        assert_eq!(m.compose(1, 2, 7), m.joint_index(&[1, 2, 3]));
    }

    #[test]
    fn deterministic_teammate_selects_joint_rows() {
        let m = two_agent_mmdp();
        let pi = StatePolicy::deterministic(2, &[1, 0]).unwrap();
        let mdp = reduce_mmdp(&m, 0, &pi).unwrap();
        for a in 0..2 {
            for (x, b) in [(0usize, 1usize), (1, 0)] {
                let joint = m.joint_index(&[a, b]);
                assert_eq!(
                    mdp.transition().dense_row(a, x),
                    m.joint_transition().dense_row(joint, x)
                );
                assert_eq!(mdp.reward(x, a), m.reward(x, joint));
            }
        }
    }

    #[test]
    fn uniform_teammate_averages_kernels() {
        let m = two_agent_mmdp();
        let mdp = reduce_mmdp(&m, 1, &StatePolicy::uniform(2, 2)).unwrap();
        for a in 0..2 {
            for x in 0..2 {
                let k1 = m.joint_transition().dense_row(m.joint_index(&[0, a]), x);
                let k2 = m.joint_transition().dense_row(m.joint_index(&[1, a]), x);
                let row = mdp.transition().dense_row(a, x);
                for y in 0..2 {
                    assert_abs_diff_eq!(row[y], (k1[y] + k2[y]) / 2.0, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn reduction_rejects_wrong_policy_shape() {
        let m = two_agent_mmdp();
        let pi = StatePolicy::uniform(2, 3);
        assert!(matches!(
            reduce_mmdp(&m, 0, &pi),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }
}
