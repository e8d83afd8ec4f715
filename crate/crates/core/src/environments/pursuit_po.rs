//! Pursuit under partial observability: two predators on a torus try to
//! corner a moving prey. The state is expressed relative to the ad hoc agent,
//! which always sits at the origin.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::grid::{astar, direction, greedy_axis_move, Cell, GridSpec, Move, NoiseModel};
use super::{assemble_pomdp, BuiltTask, EnvError, SimState, Simulator, DISCOUNT};
use crate::decision::{ResponsivePolicy, StatePolicy, TabularMMDP};
use crate::kernel::Kernel;
use crate::pomdp::Belief;
use crate::sampling::sample_discrete;

pub const CORNER_REWARD: f64 = 100.0;
pub const STEP_REWARD: f64 = -1.0;
pub const NUM_ACTIONS: usize = 4;
pub const TEAMMATE_ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PursuitTeammate {
    /// Largest-axis step toward the prey, blind to obstacles.
    Greedy,
    /// A* to a free cell next to the prey around the ad hoc agent.
    TeammateAware,
    /// Heads for a prey-adjacent cell far from the one the ad hoc agent is
    /// closest to, picked at random among ties.
    ProbabilisticDestinations,
}

impl PursuitTeammate {
    pub const ALL: [PursuitTeammate; 3] = [
        PursuitTeammate::Greedy,
        PursuitTeammate::TeammateAware,
        PursuitTeammate::ProbabilisticDestinations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PursuitTeammate::Greedy => "greedy",
            PursuitTeammate::TeammateAware => "teammate_aware",
            PursuitTeammate::ProbabilisticDestinations => "probabilistic_destinations",
        }
    }

    pub fn parse(s: &str) -> Result<Self, EnvError> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| EnvError::UnknownTeammate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PursuitPoTask {
    pub teammate: PursuitTeammate,
    pub grid: GridSpec,
}

/// Default observation decay: `ε(d) = 1 − 0.15·d`.
pub const DEFAULT_NOISE: NoiseModel = NoiseModel::DistanceDecay {
    intercept: 1.0,
    slope: 0.15,
};

const ORIGIN: Cell = Cell::new(0, 0);

impl PursuitPoTask {
    /// The 5×5 torus with the default observation decay.
    pub fn new(teammate: PursuitTeammate) -> Self {
        Self::with_grid(teammate, 5, 5, DEFAULT_NOISE)
    }

    pub fn with_grid(
        teammate: PursuitTeammate,
        width: usize,
        height: usize,
        noise: NoiseModel,
    ) -> Self {
        Self {
            teammate,
            grid: GridSpec {
                width,
                height,
                toroidal: true,
                noise,
            },
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.grid.validate()?;
        if !self.grid.toroidal {
            return Err(EnvError::InvalidCombination(
                "relative-offset pursuit needs a toroidal grid".into(),
            ));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.teammate.name().to_string()
    }

    pub fn space(&self) -> PursuitSpace {
        PursuitSpace::new(self.grid)
    }

    /// Teammate action distribution (indexed by [`Move`]) in relative state
    /// `(teammate, prey)`.
    pub fn teammate_distribution(&self, t: Cell, p: Cell) -> [f64; TEAMMATE_ACTIONS] {
        let g = &self.grid;
        let mut out = [0.0; TEAMMATE_ACTIONS];
        match self.teammate {
            PursuitTeammate::Greedy => {
                let m = if g.adjacent(t, p) {
                    Move::Stay
                } else {
                    let (dc, dr) = g.offset(t, p);
                    greedy_axis_move(dc, dr)
                };
                out[m as usize] = 1.0;
            }
            PursuitTeammate::TeammateAware => {
                let m = if g.adjacent(t, p) {
                    Move::Stay
                } else {
                    let goals: Vec<Cell> = prey_neighbors(g, p)
                        .into_iter()
                        .filter(|&c| c != ORIGIN)
                        .collect();
                    match astar(g, t, &goals, &[ORIGIN, p]) {
                        Some(path) if path.len() > 1 => direction(g, t, path[1]),
                        _ => Move::Stay,
                    }
                };
                out[m as usize] = 1.0;
            }
            PursuitTeammate::ProbabilisticDestinations => {
                let around = prey_neighbors(g, p);
                let agent_target = *around
                    .iter()
                    .min_by_key(|&&c| g.manhattan(ORIGIN, c))
                    .expect("four neighbors");
                let rest: Vec<Cell> = around.into_iter().filter(|&c| c != agent_target).collect();
                let far = rest
                    .iter()
                    .map(|&c| g.manhattan(agent_target, c))
                    .max()
                    .unwrap_or(0);
                let picks: Vec<Cell> = rest
                    .into_iter()
                    .filter(|&c| g.manhattan(agent_target, c) == far)
                    .collect();
                let w = 1.0 / picks.len() as f64;
                for d in picks {
                    let (dc, dr) = g.offset(t, d);
                    out[greedy_axis_move(dc, dr) as usize] += w;
                }
            }
        }
        out
    }

    fn cornered(&self, a: Cell, t: Cell, p: Cell) -> bool {
        self.grid.adjacent(a, p) && self.grid.adjacent(t, p)
    }

    /// Predator moves in order (ad hoc agent, then teammate), each blocked by
    /// occupied cells. Returns absolute positions `(a', t')`; the agent
    /// starts at the origin.
    fn move_predators(&self, t: Cell, p: Cell, own: Move, tm: Move) -> (Cell, Cell) {
        let g = &self.grid;
        let mut a2 = g.step(ORIGIN, own).expect("torus");
        if a2 == t || a2 == p {
            a2 = ORIGIN;
        }
        let mut t2 = g.step(t, tm).expect("torus");
        if t2 == a2 || t2 == p {
            t2 = t;
        }
        (a2, t2)
    }

    /// Cells the prey may step into; empty when it is cornered or boxed in.
    fn prey_options(&self, a: Cell, t: Cell, p: Cell) -> Vec<Cell> {
        if self.cornered(a, t, p) {
            return Vec::new();
        }
        prey_neighbors(&self.grid, p)
            .into_iter()
            .filter(|&c| c != a && c != t)
            .collect()
    }

    fn recentre(&self, a: Cell, c: Cell) -> Cell {
        self.grid.wrap(Cell::new(c.col - a.col, c.row - a.row))
    }

    /// Per-entity observation distribution over reported cells.
    fn sighting(&self, e: Cell) -> Vec<(Cell, f64)> {
        let miss = self
            .grid
            .noise
            .miss_probability(self.grid.chebyshev(ORIGIN, e));
        let mut out = Vec::with_capacity(5);
        if miss < 1.0 {
            out.push((e, 1.0 - miss));
        }
        if miss > 0.0 {
            for c in prey_neighbors(&self.grid, e) {
                out.push((c, miss / 4.0));
            }
        }
        out
    }

    pub fn build(&self) -> Result<BuiltTask, EnvError> {
        self.validate()?;
        let space = self.space();
        let n = space.num_states();
        let joint = NUM_ACTIONS * TEAMMATE_ACTIONS;
        let mut rows = Vec::with_capacity(joint * n);
        let mut reward = vec![0.0; n * joint];
        for j in 0..joint {
            let (own, tm) = (
                Move::from_index(j / TEAMMATE_ACTIONS),
                Move::from_index(j % TEAMMATE_ACTIONS),
            );
            for x in 0..n {
                let row = space.transition(self, x, own, tm);
                reward[x * joint + j] = row.iter().map(|&(y, p)| p * space.step_reward(x, y)).sum();
                rows.push(row);
            }
        }
        let kernel = Kernel::from_rows(joint, n, n, rows)?;
        let mmdp = TabularMMDP::new(
            vec![NUM_ACTIONS, TEAMMATE_ACTIONS],
            kernel,
            reward,
            DISCOUNT,
        )?;
        let probs = (0..n)
            .flat_map(|x| {
                let (t, p) = space.decode(x);
                self.teammate_distribution(t, p)
            })
            .collect();
        let teammate = ResponsivePolicy::state_only(
            StatePolicy::new(n, TEAMMATE_ACTIONS, probs)?,
            NUM_ACTIONS,
        );
        let obs_rows: Vec<Vec<(usize, f64)>> = (0..n).map(|y| space.observation(self, y)).collect();
        let obs_rows = (0..NUM_ACTIONS)
            .flat_map(|_| obs_rows.iter().cloned())
            .collect();
        let observation = Kernel::from_rows(NUM_ACTIONS, n, space.num_observations(), obs_rows)?;
        let b0 = Belief::uniform_over(n, &space.initial_support())?;
        let pomdp = assemble_pomdp(&mmdp, 0, &teammate, Some(observation), b0)?;
        Ok(BuiltTask {
            label: self.label(),
            mmdp,
            ad_hoc_index: 0,
            teammate,
            pomdp,
            simulator: Arc::new(PursuitPoSim {
                task: self.clone(),
                initial: space.initial_support(),
                space,
            }),
            reward_bound: CORNER_REWARD,
        })
    }
}

pub fn build_pursuit_po(task: &PursuitPoTask) -> Result<BuiltTask, EnvError> {
    task.build()
}

/// Orthogonal neighbors in Up, Down, Left, Right order.
fn prey_neighbors(g: &GridSpec, c: Cell) -> Vec<Cell> {
    Move::COMPASS.iter().filter_map(|&m| g.step(c, m)).collect()
}

/// Relative-offset state space: teammate and prey on distinct cells, neither
/// on the agent's cell.
#[derive(Debug, Clone)]
pub struct PursuitSpace {
    grid: GridSpec,
    states: Vec<(u16, u16)>,
    lookup: Vec<Option<u32>>,
}

impl PursuitSpace {
    fn new(grid: GridSpec) -> Self {
        let cells = grid.num_cells();
        let mut states = Vec::with_capacity((cells - 1) * (cells - 2));
        let mut lookup = vec![None; cells * cells];
        for t in 1..cells {
            for p in 1..cells {
                if p != t {
                    lookup[t * cells + p] = Some(states.len() as u32);
                    states.push((t as u16, p as u16));
                }
            }
        }
        Self {
            grid,
            states,
            lookup,
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_observations(&self) -> usize {
        self.grid.num_cells() * self.grid.num_cells()
    }

    /// `(teammate, prey)` offsets of state `x`.
    pub fn decode(&self, x: usize) -> (Cell, Cell) {
        let (t, p) = self.states[x];
        (self.grid.cell(t as usize), self.grid.cell(p as usize))
    }

    pub fn encode(&self, t: Cell, p: Cell) -> Option<usize> {
        let cells = self.grid.num_cells();
        let (t, p) = (self.grid.wrap(t), self.grid.wrap(p));
        self.lookup[self.grid.index(t) * cells + self.grid.index(p)].map(|i| i as usize)
    }

    pub fn observation_code(&self, t: Cell, p: Cell) -> usize {
        let (t, p) = (self.grid.wrap(t), self.grid.wrap(p));
        self.grid.index(t) * self.grid.num_cells() + self.grid.index(p)
    }

    pub fn is_cornered(&self, x: usize) -> bool {
        let (t, p) = self.decode(x);
        self.grid.adjacent(ORIGIN, p) && self.grid.adjacent(t, p)
    }

    pub fn initial_support(&self) -> Vec<usize> {
        (0..self.num_states())
            .filter(|&x| !self.is_cornered(x))
            .collect()
    }

    fn step_reward(&self, x: usize, next: usize) -> f64 {
        if self.is_cornered(x) {
            0.0
        } else if self.is_cornered(next) {
            CORNER_REWARD
        } else {
            STEP_REWARD
        }
    }

    fn transition(&self, task: &PursuitPoTask, x: usize, own: Move, tm: Move) -> Vec<(usize, f64)> {
        if self.is_cornered(x) {
            return vec![(x, 1.0)];
        }
        let (t, p) = self.decode(x);
        let (a2, t2) = task.move_predators(t, p, own, tm);
        let options = task.prey_options(a2, t2, p);
        let land = |p2: Cell| {
            self.encode(task.recentre(a2, t2), task.recentre(a2, p2))
                .expect("entities stay on distinct cells")
        };
        if options.is_empty() {
            return vec![(land(p), 1.0)];
        }
        let w = 1.0 / options.len() as f64;
        options.into_iter().map(|p2| (land(p2), w)).collect()
    }

    fn observation(&self, task: &PursuitPoTask, y: usize) -> Vec<(usize, f64)> {
        let (t, p) = self.decode(y);
        let mut out = Vec::new();
        for (ot, pt) in task.sighting(t) {
            for &(op, pp) in &task.sighting(p) {
                out.push((self.observation_code(ot, op), pt * pp));
            }
        }
        out
    }
}

/// Ground-truth stepper for Pursuit-PO.
#[derive(Debug, Clone)]
pub struct PursuitPoSim {
    task: PursuitPoTask,
    space: PursuitSpace,
    initial: Vec<usize>,
}

impl PursuitPoSim {
    pub fn space(&self) -> &PursuitSpace {
        &self.space
    }

    fn observe_entity(&self, e: Cell, rng: &mut dyn RngCore) -> Cell {
        let g = &self.task.grid;
        let miss = g.noise.miss_probability(g.chebyshev(ORIGIN, e));
        if rng.gen::<f64>() < miss {
            g.step(e, Move::COMPASS[rng.gen_range(0..4)])
                .expect("torus")
        } else {
            e
        }
    }
}

impl Simulator for PursuitPoSim {
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

    fn sample_teammate_action(&self, state: usize, _own: usize, rng: &mut dyn RngCore) -> usize {
        let (t, p) = self.space.decode(state);
        sample_discrete(&self.task.teammate_distribution(t, p), rng)
    }

    fn sample_transition(
        &self,
        state: usize,
        own: usize,
        teammate: usize,
        rng: &mut dyn RngCore,
    ) -> (usize, bool) {
        if self.space.is_cornered(state) {
            return (state, false);
        }
        let task = &self.task;
        let (t, p) = self.space.decode(state);
        let (a2, t2) = task.move_predators(t, p, Move::from_index(own), Move::from_index(teammate));
        let options = task.prey_options(a2, t2, p);
        let p2 = if options.is_empty() {
            p
        } else {
            options[rng.gen_range(0..options.len())]
        };
        let next = self
            .space
            .encode(task.recentre(a2, t2), task.recentre(a2, p2))
            .expect("entities stay on distinct cells");
        (next, self.space.is_cornered(next))
    }

    fn sample_observation(&self, next: usize, _own: usize, rng: &mut dyn RngCore) -> usize {
        let (t, p) = self.space.decode(next);
        let ot = self.observe_entity(t, rng);
        let op = self.observe_entity(p, rng);
        self.space.observation_code(ot, op)
    }

    fn reward(&self, state: usize, next: usize, _success: bool) -> f64 {
        self.space.step_reward(state, next)
    }

    fn is_terminal(&self, state: usize) -> bool {
        self.space.is_cornered(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_by_five_has_552_states() {
        let task = PursuitPoTask::new(PursuitTeammate::Greedy);
        assert_eq!(task.space().num_states(), 552);
        assert_eq!(task.space().num_observations(), 625);
    }

    #[test]
    fn decay_matches_distance() {
        let task = PursuitPoTask::new(PursuitTeammate::Greedy);
        let s = task.sighting(Cell::new(1, 1));
        assert!((s[0].1 - 0.15).abs() < 1e-12);
        assert_eq!(s.len(), 5);
        let noiseless = PursuitPoTask::with_grid(
            PursuitTeammate::Greedy,
            5,
            5,
            NoiseModel::DistanceDecay {
                intercept: 0.0,
                slope: 0.0,
            },
        );
        assert_eq!(
            noiseless.sighting(Cell::new(1, 1)),
            vec![(Cell::new(1, 1), 1.0)]
        );
    }

    #[test]
    fn greedy_moves_along_largest_axis() {
        let task = PursuitPoTask::new(PursuitTeammate::Greedy);
        // prey two to the right and one up of the teammate
        let t = Cell::new(0, 2);
        let p = Cell::new(2, 1);
        let d = task.teammate_distribution(t, p);
        assert_eq!(d[Move::Right as usize], 1.0);
    }

    #[test]
    fn aware_teammate_routes_around_agent() {
        let task = PursuitPoTask::new(PursuitTeammate::TeammateAware);
        // teammate left of the agent, prey right of it: the straight line
        // runs through the origin
        let t = Cell::new(4, 0);
        let p = Cell::new(1, 0);
        let greedy = PursuitPoTask::new(PursuitTeammate::Greedy).teammate_distribution(t, p);
        let aware = task.teammate_distribution(t, p);
        assert_eq!(greedy[Move::Right as usize], 1.0);
        assert_ne!(aware, greedy);
    }

    #[test]
    fn destinations_split_between_ties() {
        let task = PursuitPoTask::new(PursuitTeammate::ProbabilisticDestinations);
        let d = task.teammate_distribution(Cell::new(0, 3), Cell::new(2, 0));
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cornering_is_absorbing_and_pays_once() {
        let task = PursuitPoTask::with_grid(
            PursuitTeammate::Greedy,
            3,
            3,
            NoiseModel::Constant { epsilon: 0.0 },
        );
        let built = task.build().unwrap();
        let space = task.space();
        assert_eq!(space.num_states(), 56);
        let mdp = built.pomdp.base();
        for x in 0..space.num_states() {
            for a in 0..NUM_ACTIONS {
                if space.is_cornered(x) {
                    assert_eq!(mdp.transition().prob(a, x, x), 1.0);
                    assert_eq!(mdp.reward(x, a), 0.0);
                } else {
                    let r = mdp.reward(x, a);
                    assert!((-1.0..=CORNER_REWARD).contains(&r));
                }
            }
        }
        built.pomdp.validate().unwrap();
    }

    #[test]
    fn unknown_teammate_is_rejected() {
        assert_eq!(
            PursuitTeammate::parse("greedy"),
            Ok(PursuitTeammate::Greedy)
        );
        assert!(matches!(
            PursuitTeammate::parse("lazy"),
            Err(EnvError::UnknownTeammate(_))
        ));
    }
}
