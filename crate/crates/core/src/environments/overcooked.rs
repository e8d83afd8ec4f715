//! Two-cell Overcooked: a helper fetches onions (top) and plates (bottom) and
//! leaves them on the balcony next to its cell; the cook picks them up, fills
//! the pan with three onions, plates the soup and serves it. The pan and the
//! serving window are reachable from both cook cells.
//!
//! Within a step the helper moves first, then the cook, so an item placed by
//! the helper can be picked up by the cook in the same step.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{assemble_pomdp, BuiltTask, EnvError, SimState, Simulator, DISCOUNT};
use crate::decision::{ResponsivePolicy, StatePolicy, TabularMMDP};
use crate::kernel::Kernel;
use crate::pomdp::Belief;

pub const DELIVERY_REWARD: f64 = 15.0;
pub const STEP_REWARD: f64 = -1.0;
pub const NUM_ACTIONS: usize = 4;
pub const NUM_STATES: usize = 2 * 2 * 4 * 4 * 3 * 3 * 4;
/// Onions needed for one soup; a pan at this level is cooked.
const FULL_PAN: u8 = 3;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const NOOP: usize = 2;
pub const ACT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Item {
    Nothing = 0,
    Onion = 1,
    Plate = 2,
    Soup = 3,
}

impl Item {
    fn from_index(i: usize) -> Item {
        [Item::Nothing, Item::Onion, Item::Plate, Item::Soup][i]
    }
}

/// Top is 0, bottom is 1.
pub type Pos = usize;
pub const TOP: Pos = 0;
pub const BOTTOM: Pos = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Kitchen {
    pub helper_pos: Pos,
    pub cook_pos: Pos,
    pub helper_hand: Item,
    pub cook_hand: Item,
    /// Balcony contents, top then bottom; never a soup.
    pub balcony: [Item; 2],
    /// Onions in the pan; `3` means cooked.
    pub pan: u8,
}

impl Kitchen {
    pub fn start() -> Self {
        Self {
            helper_pos: TOP,
            cook_pos: TOP,
            helper_hand: Item::Nothing,
            cook_hand: Item::Nothing,
            balcony: [Item::Nothing; 2],
            pan: 0,
        }
    }

    pub fn encode(&self) -> usize {
        let digits = [
            (self.helper_pos, 2),
            (self.cook_pos, 2),
            (self.helper_hand as usize, 4),
            (self.cook_hand as usize, 4),
            (self.balcony[0] as usize, 3),
            (self.balcony[1] as usize, 3),
            (self.pan as usize, 4),
        ];
        digits.iter().fold(0, |acc, &(d, n)| acc * n + d)
    }

    pub fn decode(mut x: usize) -> Self {
        let mut take = |n: usize| {
            let d = x % n;
            x /= n;
            d
        };
        let pan = take(4) as u8;
        let bottom = Item::from_index(take(3));
        let top = Item::from_index(take(3));
        let cook_hand = Item::from_index(take(4));
        let helper_hand = Item::from_index(take(4));
        let cook_pos = take(2);
        let helper_pos = take(2);
        Self {
            helper_pos,
            cook_pos,
            helper_hand,
            cook_hand,
            balcony: [top, bottom],
            pan,
        }
    }

    fn cooked(&self) -> bool {
        self.pan == FULL_PAN
    }

    /// Applies the helper's then the cook's action. Returns whether a soup
    /// was served.
    pub fn apply(&self, helper: usize, cook: usize) -> (Kitchen, bool) {
        let mut k = *self;
        match helper {
            UP => k.helper_pos = TOP,
            DOWN => k.helper_pos = BOTTOM,
            ACT => {
                let p = k.helper_pos;
                match k.helper_hand {
                    Item::Nothing => {
                        k.helper_hand = if p == TOP { Item::Onion } else { Item::Plate };
                    }
                    Item::Onion | Item::Plate if k.balcony[p] == Item::Nothing => {
                        k.balcony[p] = k.helper_hand;
                        k.helper_hand = Item::Nothing;
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        let mut served = false;
        match cook {
            UP => k.cook_pos = TOP,
            DOWN => k.cook_pos = BOTTOM,
            ACT => {
                let p = k.cook_pos;
                match k.cook_hand {
                    Item::Soup => {
                        k.cook_hand = Item::Nothing;
                        served = true;
                    }
                    Item::Onion if !k.cooked() => {
                        k.pan += 1;
                        k.cook_hand = Item::Nothing;
                    }
                    Item::Plate if k.cooked() => {
                        k.pan = 0;
                        k.cook_hand = Item::Soup;
                    }
                    Item::Nothing => {
                        if k.balcony[p] != Item::Nothing {
                            k.cook_hand = k.balcony[p];
                            k.balcony[p] = Item::Nothing;
                        }
                    }
                    held => {
                        if k.balcony[p] == Item::Nothing {
                            k.balcony[p] = held;
                            k.cook_hand = Item::Nothing;
                        }
                    }
                }
            }
            _ => {}
        }
        (k, served)
    }
}

fn move_toward(from: Pos, to: Pos) -> usize {
    if to == TOP {
        if from == TOP {
            NOOP
        } else {
            UP
        }
    } else if from == BOTTOM {
        NOOP
    } else {
        DOWN
    }
}

/// Put a useless item down: here if the balcony is free, else at the other
/// cell if that one is free.
fn dispose(k: &Kitchen, pos: Pos) -> usize {
    let other = 1 - pos;
    if k.balcony[pos] == Item::Nothing {
        ACT
    } else if k.balcony[other] == Item::Nothing {
        move_toward(pos, other)
    } else {
        NOOP
    }
}

/// Cook that works as fast as it can; with nothing to do it follows the
/// helper so it is next to the next delivery.
pub fn greedy_cook(k: &Kitchen) -> usize {
    let pos = k.cook_pos;
    match k.cook_hand {
        Item::Soup => ACT,
        Item::Onion if !k.cooked() => ACT,
        Item::Plate if k.cooked() => ACT,
        Item::Onion | Item::Plate => dispose(k, pos),
        Item::Nothing => {
            let needed = if k.cooked() { Item::Plate } else { Item::Onion };
            if k.balcony[pos] == needed {
                ACT
            } else if k.balcony[1 - pos] == needed {
                move_toward(pos, 1 - pos)
            } else {
                move_toward(pos, k.helper_pos)
            }
        }
    }
}

/// Cook pinned to one cell: walks there, then does whatever the greedy cook
/// would do except move.
pub fn stationary_cook(k: &Kitchen, home: Pos) -> usize {
    if k.cook_pos != home {
        return move_toward(k.cook_pos, home);
    }
    match greedy_cook(k) {
        ACT => ACT,
        _ => NOOP,
    }
}

/// Helper that keeps the cook supplied: onions until the pan will be full,
/// then a plate.
pub fn greedy_helper(k: &Kitchen) -> usize {
    let pos = k.helper_pos;
    match k.helper_hand {
        Item::Onion | Item::Plate => dispose(k, pos),
        Item::Soup => NOOP,
        Item::Nothing => {
            let count = |it: Item| {
                k.balcony.iter().filter(|&&b| b == it).count() + usize::from(k.cook_hand == it)
            };
            let onions = k.pan as usize + count(Item::Onion);
            let plates = count(Item::Plate) + usize::from(k.cook_hand == Item::Soup);
            if !k.cooked() && onions < FULL_PAN as usize {
                if pos == TOP {
                    ACT
                } else {
                    UP
                }
            } else if plates == 0 {
                if pos == BOTTOM {
                    ACT
                } else {
                    DOWN
                }
            } else {
                NOOP
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OvercookedRole {
    Helper,
    Cook,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OvercookedTeammate {
    Greedy,
    /// Acts exactly when the ad hoc agent acts, otherwise idles.
    Dummy,
    /// Cook that stays in the top cell.
    Upper,
    /// Cook that stays in the bottom cell.
    Downer,
}

impl fmt::Display for OvercookedRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OvercookedRole::Helper => "helper",
            OvercookedRole::Cook => "cook",
        })
    }
}

impl fmt::Display for OvercookedTeammate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OvercookedTeammate::Greedy => "greedy",
            OvercookedTeammate::Dummy => "dummy",
            OvercookedTeammate::Upper => "upper",
            OvercookedTeammate::Downer => "downer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OvercookedTask {
    /// Role played by the ad hoc agent.
    pub role: OvercookedRole,
    pub teammate: OvercookedTeammate,
}

impl OvercookedTask {
    pub fn new(role: OvercookedRole, teammate: OvercookedTeammate) -> Result<Self, EnvError> {
        let task = Self { role, teammate };
        task.validate()?;
        Ok(task)
    }

    /// The six valid role/teammate combinations.
    pub fn all() -> Vec<OvercookedTask> {
        use OvercookedTeammate::*;
        let mut out: Vec<_> = [Greedy, Dummy, Upper, Downer]
            .into_iter()
            .map(|t| OvercookedTask {
                role: OvercookedRole::Helper,
                teammate: t,
            })
            .collect();
        out.extend([Greedy, Dummy].map(|t| OvercookedTask {
            role: OvercookedRole::Cook,
            teammate: t,
        }));
        out
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match (self.role, self.teammate) {
            (OvercookedRole::Cook, OvercookedTeammate::Upper | OvercookedTeammate::Downer) => {
                Err(EnvError::InvalidCombination(format!(
                    "{} teammate only exists as a cook",
                    self.teammate
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        format!("{}-with-{}", self.role, self.teammate)
    }

    pub fn ad_hoc_index(&self) -> usize {
        match self.role {
            OvercookedRole::Helper => 0,
            OvercookedRole::Cook => 1,
        }
    }

    /// Teammate action in `k` given the ad hoc agent's simultaneous action.
    pub fn teammate_action(&self, k: &Kitchen, own: usize) -> usize {
        match (self.role, self.teammate) {
            (_, OvercookedTeammate::Dummy) => {
                if own == ACT {
                    ACT
                } else {
                    NOOP
                }
            }
            (OvercookedRole::Helper, OvercookedTeammate::Greedy) => greedy_cook(k),
            (OvercookedRole::Helper, OvercookedTeammate::Upper) => stationary_cook(k, TOP),
            (OvercookedRole::Helper, OvercookedTeammate::Downer) => stationary_cook(k, BOTTOM),
            (OvercookedRole::Cook, _) => greedy_helper(k),
        }
    }

    pub fn teammate_policy(&self) -> Result<ResponsivePolicy, EnvError> {
        let per_own = (0..NUM_ACTIONS)
            .map(|own| {
                let acts: Vec<usize> = (0..NUM_STATES)
                    .map(|x| self.teammate_action(&Kitchen::decode(x), own))
                    .collect();
                StatePolicy::deterministic(NUM_ACTIONS, &acts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ResponsivePolicy::new(per_own)?)
    }

    pub fn build(&self) -> Result<BuiltTask, EnvError> {
        self.validate()?;
        let joint = NUM_ACTIONS * NUM_ACTIONS;
        let mut rows = Vec::with_capacity(joint * NUM_STATES);
        let mut reward = vec![0.0; NUM_STATES * joint];
        for j in 0..joint {
            let (helper, cook) = (j / NUM_ACTIONS, j % NUM_ACTIONS);
            for x in 0..NUM_STATES {
                let (next, served) = Kitchen::decode(x).apply(helper, cook);
                reward[x * joint + j] = if served { DELIVERY_REWARD } else { STEP_REWARD };
                rows.push(vec![(next.encode(), 1.0)]);
            }
        }
        let kernel = Kernel::from_rows(joint, NUM_STATES, NUM_STATES, rows)?;
        let mmdp = TabularMMDP::new(vec![NUM_ACTIONS, NUM_ACTIONS], kernel, reward, DISCOUNT)?;
        let teammate = self.teammate_policy()?;
        let b0 = Belief::point(NUM_STATES, Kitchen::start().encode());
        let pomdp = assemble_pomdp(&mmdp, self.ad_hoc_index(), &teammate, None, b0)?;
        Ok(BuiltTask {
            label: self.label(),
            mmdp,
            ad_hoc_index: self.ad_hoc_index(),
            teammate,
            pomdp,
            simulator: Arc::new(OvercookedSim { task: *self }),
            reward_bound: DELIVERY_REWARD,
        })
    }
}

pub fn build_overcooked(task: &OvercookedTask) -> Result<BuiltTask, EnvError> {
    task.build()
}

#[derive(Debug, Clone)]
pub struct OvercookedSim {
    task: OvercookedTask,
}

impl Simulator for OvercookedSim {
    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn reset(&self, _rng: &mut dyn RngCore) -> SimState {
        SimState {
            index: Kitchen::start().encode(),
            step: 0,
            done: false,
        }
    }

    fn sample_teammate_action(&self, state: usize, own: usize, _rng: &mut dyn RngCore) -> usize {
        self.task.teammate_action(&Kitchen::decode(state), own)
    }

    fn sample_transition(
        &self,
        state: usize,
        own: usize,
        teammate: usize,
        _rng: &mut dyn RngCore,
    ) -> (usize, bool) {
        let (helper, cook) = match self.task.role {
            OvercookedRole::Helper => (own, teammate),
            OvercookedRole::Cook => (teammate, own),
        };
        let (next, served) = Kitchen::decode(state).apply(helper, cook);
        (next.encode(), served)
    }

    fn sample_observation(&self, next: usize, _own: usize, _rng: &mut dyn RngCore) -> usize {
        next
    }

    fn reward(&self, _state: usize, _next: usize, success: bool) -> f64 {
        if success {
            DELIVERY_REWARD
        } else {
            STEP_REWARD
        }
    }

    fn is_terminal(&self, _state: usize) -> bool {
        false
    }
}
