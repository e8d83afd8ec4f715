//! Night-time Pursuit: two predators must stand on two sleeping preys at the
//! same time. The preys never move and are not part of the state; they only
//! shape rewards, observations, and the teammate's behavior.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::grid::{greedy_axis_move, Cell, GridSpec, Move, NoiseModel};
use super::{assemble_pomdp, BuiltTask, EnvError, SimState, Simulator, DISCOUNT};
use crate::decision::{ResponsivePolicy, StatePolicy, TabularMMDP};
use crate::kernel::Kernel;
use crate::pomdp::Belief;

pub const CAPTURE_REWARD: f64 = 100.0;
pub const STEP_REWARD: f64 = -1.0;
pub const NUM_ACTIONS: usize = 5;
/// Four neighbor slots, three symbols each.
pub const NUM_OBSERVATIONS: usize = 81;

/// What a neighbor slot reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sighting {
    Nothing = 0,
    Teammate = 1,
    Prey = 2,
}

impl Sighting {
    fn from_index(i: usize) -> Sighting {
        [Sighting::Nothing, Sighting::Teammate, Sighting::Prey][i]
    }
}

/// Slots are ordered up, down, left, right.
pub fn encode_observation(slots: [Sighting; 4]) -> usize {
    slots.iter().fold(0, |acc, &s| acc * 3 + s as usize)
}

pub fn decode_observation(mut z: usize) -> [Sighting; 4] {
    let mut out = [Sighting::Nothing; 4];
    for slot in out.iter_mut().rev() {
        *slot = Sighting::from_index(z % 3);
        z /= 3;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NightPursuitTask {
    pub preys: [Cell; 2],
    pub grid: GridSpec,
}

impl NightPursuitTask {
    pub fn new(
        preys: [Cell; 2],
        width: usize,
        height: usize,
        epsilon: f64,
    ) -> Result<Self, EnvError> {
        let task = Self {
            preys,
            grid: GridSpec {
                width,
                height,
                toroidal: false,
                noise: NoiseModel::Constant { epsilon },
            },
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.grid.validate()?;
        if let NoiseModel::DistanceDecay { .. } = self.grid.noise {
            return Err(EnvError::InvalidCombination(
                "night-time pursuit uses a constant failure probability".into(),
            ));
        }
        for &p in &self.preys {
            if !self.grid.contains(p) {
                return Err(EnvError::PreyOutOfBounds(p));
            }
        }
        if self.preys[0] == self.preys[1] {
            return Err(EnvError::PreysOverlap);
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.grid.noise.miss_probability(0)
    }

    pub fn label(&self) -> String {
        let [p, q] = self.preys;
        format!("preys-c{}r{}-c{}r{}", p.col, p.row, q.col, q.row)
    }

    pub fn num_cells(&self) -> usize {
        self.grid.num_cells()
    }

    pub fn num_states(&self) -> usize {
        self.num_cells() * self.num_cells()
    }

    pub fn encode(&self, agent: Cell, teammate: Cell) -> usize {
        self.grid.index(agent) * self.num_cells() + self.grid.index(teammate)
    }

    pub fn decode(&self, x: usize) -> (Cell, Cell) {
        let n = self.num_cells();
        (self.grid.cell(x / n), self.grid.cell(x % n))
    }

    /// Both prey cells covered, one predator each.
    pub fn is_captured(&self, x: usize) -> bool {
        let (a, t) = self.decode(x);
        let [p, q] = self.preys;
        (a == p && t == q) || (a == q && t == p)
    }

    /// Closest prey by Manhattan distance, lower index on ties.
    pub fn teammate_target(&self, teammate: Cell) -> Cell {
        let [p, q] = self.preys;
        if self.grid.manhattan(teammate, q) < self.grid.manhattan(teammate, p) {
            q
        } else {
            p
        }
    }

    pub fn teammate_move(&self, teammate: Cell) -> Move {
        let (dc, dr) = self.grid.offset(teammate, self.teammate_target(teammate));
        greedy_axis_move(dc, dr)
    }

    pub fn teammate_policy(&self) -> StatePolicy {
        let actions: Vec<usize> = (0..self.num_states())
            .map(|x| self.teammate_move(self.decode(x).1) as usize)
            .collect();
        StatePolicy::deterministic(NUM_ACTIONS, &actions).expect("moves are in range")
    }

    fn moved(&self, c: Cell, m: Move) -> Cell {
        self.grid.step(c, m).unwrap_or(c)
    }

    /// Successor distribution of the joint action (`own`, `teammate`).
    pub fn transition(&self, x: usize, own: Move, teammate: Move) -> Vec<(usize, f64)> {
        if self.is_captured(x) {
            return vec![(x, 1.0)];
        }
        let (a, t) = self.decode(x);
        let t2 = self.moved(t, teammate);
        let eps = self.epsilon();
        let ok = self.encode(self.moved(a, own), t2);
        let fail = self.encode(a, t2);
        if own == Move::Stay || ok == fail {
            vec![(ok, 1.0)]
        } else {
            vec![(ok, 1.0 - eps), (fail, eps)]
        }
    }

    /// Distribution of the observation emitted in state `x`.
    pub fn observation_distribution(&self, x: usize) -> Vec<(usize, f64)> {
        let eps = self.epsilon();
        let (a, t) = self.decode(x);
        let mut dist = vec![(0usize, 1.0)];
        for m in Move::COMPASS {
            let (has_t, has_p) = self.slot_contents(a, t, m);
            let p_t = if has_t { 1.0 - eps } else { 0.0 };
            let p_p = if has_p {
                (1.0 - p_t) * (1.0 - eps)
            } else {
                0.0
            };
            let slot = [
                (Sighting::Nothing, 1.0 - p_t - p_p),
                (Sighting::Teammate, p_t),
                (Sighting::Prey, p_p),
            ];
            let mut next = Vec::with_capacity(dist.len() * 3);
            for &(z, pz) in &dist {
                for &(s, ps) in &slot {
                    if ps > 0.0 {
                        next.push((z * 3 + s as usize, pz * ps));
                    }
                }
            }
            dist = next;
        }
        dist
    }

    fn slot_contents(&self, agent: Cell, teammate: Cell, m: Move) -> (bool, bool) {
        match self.grid.step(agent, m) {
            Some(c) => (c == teammate, self.preys.contains(&c)),
            None => (false, false),
        }
    }

    fn step_reward(&self, x: usize, next: usize) -> f64 {
        if self.is_captured(x) {
            0.0
        } else if self.is_captured(next) {
            CAPTURE_REWARD
        } else {
            STEP_REWARD
        }
    }

    /// Agent and teammate on distinct, prey-free cells.
    pub fn initial_support(&self) -> Vec<usize> {
        (0..self.num_states())
            .filter(|&x| {
                let (a, t) = self.decode(x);
                a != t && !self.preys.contains(&a) && !self.preys.contains(&t)
            })
            .collect()
    }

    pub fn build(&self) -> Result<BuiltTask, EnvError> {
        self.validate()?;
        let n = self.num_states();
        let joint = NUM_ACTIONS * NUM_ACTIONS;
        let mut rows = Vec::with_capacity(joint * n);
        let mut reward = vec![0.0; n * joint];
        for j in 0..joint {
            let (own, tm) = (
                Move::from_index(j / NUM_ACTIONS),
                Move::from_index(j % NUM_ACTIONS),
            );
            for x in 0..n {
                let row = self.transition(x, own, tm);
                reward[x * joint + j] = row.iter().map(|&(y, p)| p * self.step_reward(x, y)).sum();
                rows.push(row);
            }
        }
        let kernel = Kernel::from_rows(joint, n, n, rows)?;
        let mmdp = TabularMMDP::new(vec![NUM_ACTIONS, NUM_ACTIONS], kernel, reward, DISCOUNT)?;
        let teammate = ResponsivePolicy::state_only(self.teammate_policy(), NUM_ACTIONS);
        let obs_rows: Vec<Vec<(usize, f64)>> =
            (0..n).map(|y| self.observation_distribution(y)).collect();
        let obs_rows = (0..NUM_ACTIONS)
            .flat_map(|_| obs_rows.iter().cloned())
            .collect();
        let observation = Kernel::from_rows(NUM_ACTIONS, n, NUM_OBSERVATIONS, obs_rows)?;
        let b0 = Belief::uniform_over(n, &self.initial_support())?;
        let pomdp = assemble_pomdp(&mmdp, 0, &teammate, Some(observation), b0)?;
        Ok(BuiltTask {
            label: self.label(),
            mmdp,
            ad_hoc_index: 0,
            teammate,
            pomdp,
            simulator: Arc::new(NightPursuitSim {
                task: self.clone(),
                initial: self.initial_support(),
            }),
            reward_bound: CAPTURE_REWARD,
        })
    }
}

pub fn build_night_pursuit(task: &NightPursuitTask) -> Result<BuiltTask, EnvError> {
    task.build()
}

/// Ground-truth stepper. Samples failures and sightings directly rather than
/// reading the built kernels.
#[derive(Debug, Clone)]
pub struct NightPursuitSim {
    task: NightPursuitTask,
    initial: Vec<usize>,
}

impl Simulator for NightPursuitSim {
    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn reset(&self, rng: &mut dyn RngCore) -> SimState {
        let index = self.initial[rng.gen_range(0..self.initial.len())];
        SimState {
            index,
            step: 0,
            done: false,
        }
    }

    fn sample_teammate_action(&self, state: usize, _own: usize, _rng: &mut dyn RngCore) -> usize {
        self.task.teammate_move(self.task.decode(state).1) as usize
    }

    fn sample_transition(
        &self,
        state: usize,
        own: usize,
        teammate: usize,
        rng: &mut dyn RngCore,
    ) -> (usize, bool) {
        let task = &self.task;
        if task.is_captured(state) {
            return (state, false);
        }
        let (a, t) = task.decode(state);
        let t2 = task.moved(t, Move::from_index(teammate));
        let own = Move::from_index(own);
        let failed = own != Move::Stay && rng.gen::<f64>() < task.epsilon();
        let a2 = if failed { a } else { task.moved(a, own) };
        let next = task.encode(a2, t2);
        (next, task.is_captured(next))
    }

    fn sample_observation(&self, next: usize, _own: usize, rng: &mut dyn RngCore) -> usize {
        let task = &self.task;
        let eps = task.epsilon();
        let (a, t) = task.decode(next);
        let mut slots = [Sighting::Nothing; 4];
        for (slot, m) in slots.iter_mut().zip(Move::COMPASS) {
            let (has_t, has_p) = task.slot_contents(a, t, m);
            let saw_t = has_t && rng.gen::<f64>() >= eps;
            let saw_p = has_p && rng.gen::<f64>() >= eps;
            *slot = if saw_t {
                Sighting::Teammate
            } else if saw_p {
                Sighting::Prey
            } else {
                Sighting::Nothing
            };
        }
        encode_observation(slots)
    }

    fn reward(&self, state: usize, next: usize, _success: bool) -> f64 {
        self.task.step_reward(state, next)
    }

    fn is_terminal(&self, state: usize) -> bool {
        self.task.is_captured(state)
    }
}

/// Used by the harness when drawing a task pool: every unordered pair of
/// distinct cells, in a fixed order.
pub fn all_prey_pairs(grid: &GridSpec) -> Vec<[Cell; 2]> {
    let n = grid.num_cells();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push([grid.cell(i), grid.cell(j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(eps: f64) -> NightPursuitTask {
        NightPursuitTask::new([Cell::new(0, 0), Cell::new(2, 2)], 3, 3, eps).unwrap()
    }

    #[test]
    fn state_counts() {
        assert_eq!(small(0.3).num_states(), 81);
        let five = NightPursuitTask::new([Cell::new(0, 0), Cell::new(4, 4)], 5, 5, 0.3).unwrap();
        assert_eq!(five.num_states(), 625);
        let six = NightPursuitTask::new([Cell::new(0, 0), Cell::new(5, 5)], 6, 6, 0.3).unwrap();
        assert_eq!(six.num_states(), 1296);
        assert_eq!(small(0.3).initial_support().len(), 42);
    }

    #[test]
    fn rejects_bad_preys() {
        assert_eq!(
            NightPursuitTask::new([Cell::new(0, 0), Cell::new(0, 0)], 3, 3, 0.1),
            Err(EnvError::PreysOverlap)
        );
        assert!(matches!(
            NightPursuitTask::new([Cell::new(0, 0), Cell::new(3, 0)], 3, 3, 0.1),
            Err(EnvError::PreyOutOfBounds(_))
        ));
        assert!(NightPursuitTask::new([Cell::new(0, 0), Cell::new(1, 0)], 2, 2, 0.1).is_err());
    }

    #[test]
    fn observation_codes_roundtrip() {
        for z in 0..NUM_OBSERVATIONS {
            assert_eq!(encode_observation(decode_observation(z)), z);
        }
    }

    #[test]
    fn noiseless_teammate_above_is_seen() {
        let task = small(0.0);
        let x = task.encode(Cell::new(1, 1), Cell::new(1, 0));
        let dist = task.observation_distribution(x);
        assert_eq!(dist.len(), 1);
        let slots = decode_observation(dist[0].0);
        assert_eq!(slots[0], Sighting::Teammate);
        assert_eq!(dist[0].1, 1.0);
    }

    #[test]
    fn teammate_shadows_prey_in_same_slot() {
        let task = small(0.25);
        let x = task.encode(Cell::new(1, 0), Cell::new(0, 0));
        let dist = task.observation_distribution(x);
        let left = |z: usize| decode_observation(z)[2];
        let p = |s: Sighting| {
            dist.iter()
                .filter(|&&(z, _)| left(z) == s)
                .map(|&(_, p)| p)
                .sum::<f64>()
        };
        assert!((p(Sighting::Teammate) - 0.75).abs() < 1e-12);
        assert!((p(Sighting::Prey) - 0.25 * 0.75).abs() < 1e-12);
        assert!((p(Sighting::Nothing) - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn teammate_prefers_lower_index_prey_on_ties() {
        let task = small(0.0);
        // (1,1) is two steps from both preys
        assert_eq!(task.teammate_target(Cell::new(1, 1)), Cell::new(0, 0));
        assert_eq!(task.teammate_move(Cell::new(1, 1)), Move::Left);
        assert_eq!(task.teammate_move(Cell::new(0, 0)), Move::Stay);
    }

    #[test]
    fn capture_is_absorbing_and_rewarded_once() {
        let task = small(0.3);
        let built = task.build().unwrap();
        let mdp = built.pomdp.base();
        let captured = task.encode(Cell::new(0, 0), Cell::new(2, 2));
        for a in 0..NUM_ACTIONS {
            assert_eq!(mdp.transition().prob(a, captured, captured), 1.0);
            assert_eq!(mdp.reward(captured, a), 0.0);
        }
        // one step from capture: agent at (1,0) moving left, teammate on (2,2)
        let x = task.encode(Cell::new(1, 0), Cell::new(2, 2));
        let r = mdp.reward(x, Move::Left as usize);
        assert!((r - (0.7 * 100.0 + 0.3 * -1.0)).abs() < 1e-9);
    }

    #[test]
    fn walls_keep_agent_in_place() {
        let task = small(0.0);
        let x = task.encode(Cell::new(0, 1), Cell::new(1, 1));
        let row = task.transition(x, Move::Left, Move::Stay);
        assert_eq!(row, vec![(x, 1.0)]);
    }

    #[test]
    fn pomdp_is_valid() {
        let built = small(0.3).build().unwrap();
        built.pomdp.validate().unwrap();
        assert_eq!(built.pomdp.num_observations(), 81);
        assert_eq!(built.pomdp.num_actions(), 5);
    }
}
