//! Benchmark domains: ground-truth simulators and the task models built from
//! them.
//!
//! Each builder produces the task's MMDP, the teammate policy, the POMDP the
//! ad hoc agent plans with (teammate folded into the transitions), and a
//! simulator. Model state indices and simulator states are the same integers;
//! the per-domain `encode`/`decode` functions are the bijection.

pub mod grid;
pub mod night_pursuit;
pub mod overcooked;
pub mod pursuit_po;

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{reduce_mmdp_responsive, ResponsivePolicy, TabularMMDP};
use crate::error::ModelError;
use crate::kernel::Kernel;
use crate::pomdp::{Belief, TabularPOMDP};

pub use grid::{Cell, GridSpec, NoiseModel};
pub use night_pursuit::NightPursuitTask;
pub use overcooked::{OvercookedRole, OvercookedTask, OvercookedTeammate};
pub use pursuit_po::{PursuitPoTask, PursuitTeammate};

/// Discount used by every benchmark domain.
pub const DISCOUNT: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("grid {width}x{height} is too small (minimum 3x3)")]
    GridTooSmall { width: usize, height: usize },
    #[error("prey cell {0} is outside the grid")]
    PreyOutOfBounds(Cell),
    #[error("prey cells must be distinct")]
    PreysOverlap,
    #[error("noise probability {0} outside [0, 1]")]
    InvalidNoise(f64),
    #[error("unknown teammate type {0:?}")]
    UnknownTeammate(String),
    #[error("invalid role/teammate combination: {0}")]
    InvalidCombination(String),
    #[error("cannot step a finished episode")]
    EpisodeDone,
    #[error("action {action} outside 0..{num_actions}")]
    InvalidAction { action: usize, num_actions: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Ground-truth simulator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimState {
    /// Index of the underlying state in the task model.
    pub index: usize,
    pub step: usize,
    pub done: bool,
}

/// Result of one simulator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next: SimState,
    pub observation: usize,
    pub reward: f64,
    pub done: bool,
    /// Reduced joint action of the teammates.
    pub teammate_action: usize,
    /// Capture (pursuit) or soup delivery (Overcooked) happened on this step.
    pub success: bool,
}

/// Per-trial environment stepper. Implementations hold no mutable state.
pub trait Simulator: Send + Sync + fmt::Debug {
    fn num_actions(&self) -> usize;

    /// Samples an initial state from the task's initial distribution.
    fn reset(&self, rng: &mut dyn RngCore) -> SimState;

    /// Samples the teammate's action at `state` given the ad hoc action.
    fn sample_teammate_action(&self, state: usize, own: usize, rng: &mut dyn RngCore) -> usize;

    /// Applies the joint action, returning `(next state, success)`.
    fn sample_transition(
        &self,
        state: usize,
        own: usize,
        teammate: usize,
        rng: &mut dyn RngCore,
    ) -> (usize, bool);

    /// Samples the ad hoc agent's observation of `next` after `own`.
    fn sample_observation(&self, next: usize, own: usize, rng: &mut dyn RngCore) -> usize;

    /// One-step reward for reaching `next` from `state`.
    fn reward(&self, state: usize, next: usize, success: bool) -> f64;

    /// Absorbing success states end the episode; Overcooked never ends early.
    fn is_terminal(&self, state: usize) -> bool;

    fn step(
        &self,
        state: &SimState,
        own: usize,
        rng: &mut dyn RngCore,
    ) -> Result<StepOutcome, EnvError> {
        if state.done {
            return Err(EnvError::EpisodeDone);
        }
        if own >= self.num_actions() {
            return Err(EnvError::InvalidAction {
                action: own,
                num_actions: self.num_actions(),
            });
        }
        let teammate = self.sample_teammate_action(state.index, own, rng);
        let (next, success) = self.sample_transition(state.index, own, teammate, rng);
        let observation = self.sample_observation(next, own, rng);
        let reward = self.reward(state.index, next, success);
        let done = self.is_terminal(next);
        Ok(StepOutcome {
            next: SimState {
                index: next,
                step: state.step + 1,
                done,
            },
            observation,
            reward,
            done,
            teammate_action: teammate,
            success,
        })
    }
}

/// Everything the harness and the agents need about one task.
#[derive(Debug, Clone)]
pub struct BuiltTask {
    pub label: String,
    pub mmdp: TabularMMDP,
    pub ad_hoc_index: usize,
    pub teammate: ResponsivePolicy,
    pub pomdp: TabularPOMDP,
    pub simulator: Arc<dyn Simulator>,
    /// Largest absolute one-step reward of the domain.
    pub reward_bound: f64,
}

/// Folds the teammate into the MMDP and attaches observations.
pub(crate) fn assemble_pomdp(
    mmdp: &TabularMMDP,
    ad_hoc_index: usize,
    teammate: &ResponsivePolicy,
    observation: Option<Kernel>,
    initial: Belief,
) -> Result<TabularPOMDP, ModelError> {
    let base = reduce_mmdp_responsive(mmdp, ad_hoc_index, teammate)?;
    match observation {
        Some(o) => TabularPOMDP::new(base, o, initial),
        None => TabularPOMDP::identity_observed(base, initial),
    }
}
