//! Grid geometry shared by the pursuit domains.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EnvError;

/// Column/row cell; row 0 is the top edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: i32,
    pub row: i32,
}

impl Cell {
    pub const fn new(col: i32, row: i32) -> Self {
        Self { col, row }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

/// Movement actions in their canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Stay = 4,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Up, Move::Down, Move::Left, Move::Right, Move::Stay];
    pub const COMPASS: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn from_index(i: usize) -> Move {
        Self::ALL[i]
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Move::Up => (0, -1),
            Move::Down => (0, 1),
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
            Move::Stay => (0, 0),
        }
    }
}

/// Per-element observation failure model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    /// Failure probability `ε` regardless of distance.
    Constant { epsilon: f64 },
    /// `ε(d) = intercept − slope·d`, clamped to `[0, 1]`.
    DistanceDecay { intercept: f64, slope: f64 },
}

impl NoiseModel {
    pub fn miss_probability(&self, distance: u32) -> f64 {
        match *self {
            NoiseModel::Constant { epsilon } => epsilon,
            NoiseModel::DistanceDecay { intercept, slope } => {
                (intercept - slope * distance as f64).clamp(0.0, 1.0)
            }
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match *self {
            NoiseModel::Constant { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(EnvError::InvalidNoise(epsilon))
            }
            NoiseModel::DistanceDecay { intercept, slope }
                if !intercept.is_finite() || !slope.is_finite() =>
            {
                Err(EnvError::InvalidNoise(intercept))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub toroidal: bool,
    pub noise: NoiseModel,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.width < 3 || self.height < 3 {
            return Err(EnvError::GridTooSmall {
                width: self.width,
                height: self.height,
            });
        }
        self.noise.validate()
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.col >= 0 && c.row >= 0 && (c.col as usize) < self.width && (c.row as usize) < self.height
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row as usize * self.width + c.col as usize
    }

    pub fn cell(&self, i: usize) -> Cell {
        Cell::new((i % self.width) as i32, (i / self.width) as i32)
    }

    pub fn wrap(&self, c: Cell) -> Cell {
        Cell::new(
            c.col.rem_euclid(self.width as i32),
            c.row.rem_euclid(self.height as i32),
        )
    }

    /// Neighbor in direction `m`; `None` when a bounded grid's wall blocks it.
    pub fn step(&self, c: Cell, m: Move) -> Option<Cell> {
        let (dc, dr) = m.delta();
        let n = Cell::new(c.col + dc, c.row + dr);
        if self.toroidal {
            Some(self.wrap(n))
        } else if self.contains(n) {
            Some(n)
        } else {
            None
        }
    }

    /// Signed displacement from `a` to `b`, taking the short way on a torus.
    pub fn offset(&self, a: Cell, b: Cell) -> (i32, i32) {
        let (mut dc, mut dr) = (b.col - a.col, b.row - a.row);
        if self.toroidal {
            dc = canonical(dc, self.width as i32);
            dr = canonical(dr, self.height as i32);
        }
        (dc, dr)
    }

    pub fn manhattan(&self, a: Cell, b: Cell) -> u32 {
        let (dc, dr) = self.offset(a, b);
        dc.unsigned_abs() + dr.unsigned_abs()
    }

    pub fn chebyshev(&self, a: Cell, b: Cell) -> u32 {
        let (dc, dr) = self.offset(a, b);
        dc.unsigned_abs().max(dr.unsigned_abs())
    }

    pub fn adjacent(&self, a: Cell, b: Cell) -> bool {
        self.manhattan(a, b) == 1
    }
}

/// Representative of `d mod n` in `[-(n-1)/2, n/2]`.
pub fn canonical(d: i32, n: i32) -> i32 {
    let r = d.rem_euclid(n);
    if r > n / 2 {
        r - n
    } else {
        r
    }
}

/// Move along the axis with the larger displacement (horizontal on ties);
/// `Stay` when the displacement is zero.
pub fn greedy_axis_move(dc: i32, dr: i32) -> Move {
    if dc == 0 && dr == 0 {
        Move::Stay
    } else if dc.abs() >= dr.abs() {
        if dc > 0 {
            Move::Right
        } else {
            Move::Left
        }
    } else if dr > 0 {
        Move::Down
    } else {
        Move::Up
    }
}

/// A* over 4-connected moves from `start` to the nearest cell of `goals`,
/// avoiding `blocked`. Returns the path including both endpoints.
///
/// Expansion order is deterministic: lowest `f`, then lowest `g`, then
/// insertion order; neighbors are generated Up, Down, Left, Right.
pub fn astar(grid: &GridSpec, start: Cell, goals: &[Cell], blocked: &[Cell]) -> Option<Vec<Cell>> {
    if goals.is_empty() {
        return None;
    }
    if goals.contains(&start) {
        return Some(vec![start]);
    }
    let h = |c: Cell| {
        goals
            .iter()
            .map(|&g| grid.manhattan(c, g))
            .min()
            .unwrap_or(0)
    };
    let mut open = BinaryHeap::new();
    let mut g_score: HashMap<Cell, u32> = HashMap::new();
    let mut parent: HashMap<Cell, Cell> = HashMap::new();
    let mut counter = 0u64;
    g_score.insert(start, 0);
    open.push(Reverse((h(start), 0u32, counter, start)));
    while let Some(Reverse((_, g, _, cur))) = open.pop() {
        if g > g_score[&cur] {
            continue;
        }
        if goals.contains(&cur) {
            let mut path = vec![cur];
            let mut c = cur;
            while let Some(&p) = parent.get(&c) {
                path.push(p);
                c = p;
            }
            path.reverse();
            return Some(path);
        }
        for m in Move::COMPASS {
            let Some(next) = grid.step(cur, m) else {
                continue;
            };
            if blocked.contains(&next) {
                continue;
            }
            let ng = g + 1;
            if g_score.get(&next).map_or(true, |&old| ng < old) {
                g_score.insert(next, ng);
                parent.insert(next, cur);
                counter += 1;
                open.push(Reverse((ng + h(next), ng, counter, next)));
            }
        }
    }
    None
}

/// Direction of the single step from `from` to the adjacent cell `to`.
pub fn direction(grid: &GridSpec, from: Cell, to: Cell) -> Move {
    Move::ALL
        .into_iter()
        .find(|&m| grid.step(from, m) == Some(to))
        .unwrap_or(Move::Stay)
}
