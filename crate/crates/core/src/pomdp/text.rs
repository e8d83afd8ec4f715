//! Plain-text POMDP format for hand-written models.
//!
//! ```text
//! # comments start with '#'
//! discount: 0.95
//! states: 2
//! actions: 1
//! observations: 2
//! start: 0.5 0.5
//! T: 0          # one |X| x |X| block per action
//! 0.9 0.1
//! 0.2 0.8
//! O: 0          # one |X| x |Z| block per action, rows are successor states
//! 0.7 0.3
//! 0.4 0.6
//! R:            # |X| rows of |A| rewards
//! 1
//! -1
//! ```
//!
//! `start:` may be omitted (uniform initial belief). Every action needs both
//! a `T:` and an `O:` block.

use thiserror::Error;

use super::{Belief, TabularPOMDP};
use crate::decision::TabularMDP;
use crate::error::ModelError;
use crate::kernel::Kernel;

#[derive(Debug, Error)]
pub enum TextModelError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing section or header: {0}")]
    Missing(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn syntax(line: usize, message: impl Into<String>) -> TextModelError {
    TextModelError::Syntax {
        line,
        message: message.into(),
    }
}

enum Block {
    Transition(usize),
    Observation(usize),
    Reward,
}

pub fn parse_text_model(src: &str) -> Result<TabularPOMDP, TextModelError> {
    let mut discount = None;
    let mut states = None;
    let mut actions = None;
    let mut observations = None;
    let mut start: Option<Vec<f64>> = None;
    let mut transitions: Vec<Option<Vec<Vec<f64>>>> = Vec::new();
    let mut obs: Vec<Option<Vec<Vec<f64>>>> = Vec::new();
    let mut rewards: Option<Vec<Vec<f64>>> = None;
    let mut current: Option<(Block, Vec<Vec<f64>>)> = None;

    let finish = |cur: Option<(Block, Vec<Vec<f64>>)>,
                  transitions: &mut Vec<Option<Vec<Vec<f64>>>>,
                  obs: &mut Vec<Option<Vec<Vec<f64>>>>,
                  rewards: &mut Option<Vec<Vec<f64>>>| {
        match cur {
            Some((Block::Transition(a), rows)) => transitions[a] = Some(rows),
            Some((Block::Observation(a), rows)) => obs[a] = Some(rows),
            Some((Block::Reward, rows)) => *rewards = Some(rows),
            None => {}
        }
    };

    for (i, raw) in src.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((key, rest)) = line.split_once(':') {
            let key = key.trim();
            let rest = rest.trim();
            let count = |v: &str| -> Result<usize, TextModelError> {
                v.parse()
                    .map_err(|_| syntax(lineno, format!("bad count {v:?}")))
            };
            match key {
                "discount" => {
                    discount = Some(
                        rest.parse::<f64>()
                            .map_err(|_| syntax(lineno, "bad discount"))?,
                    )
                }
                "states" => states = Some(count(rest)?),
                "actions" => {
                    let a = count(rest)?;
                    actions = Some(a);
                    transitions = vec![None; a];
                    obs = vec![None; a];
                }
                "observations" => observations = Some(count(rest)?),
                "start" => start = Some(parse_row(rest, lineno)?),
                "T" | "O" => {
                    finish(current.take(), &mut transitions, &mut obs, &mut rewards);
                    let a = count(rest)?;
                    if a >= transitions.len() {
                        return Err(syntax(lineno, format!("action {a} out of range")));
                    }
                    let block = if key == "T" {
                        Block::Transition(a)
                    } else {
                        Block::Observation(a)
                    };
                    current = Some((block, Vec::new()));
                }
                "R" => {
                    finish(current.take(), &mut transitions, &mut obs, &mut rewards);
                    current = Some((Block::Reward, Vec::new()));
                }
                other => return Err(syntax(lineno, format!("unknown key {other:?}"))),
            }
        } else {
            let row = parse_row(line, lineno)?;
            match current.as_mut() {
                Some((_, rows)) => rows.push(row),
                None => return Err(syntax(lineno, "numbers outside of a block")),
            }
        }
    }
    finish(current.take(), &mut transitions, &mut obs, &mut rewards);

    let discount = discount.ok_or_else(|| TextModelError::Missing("discount".into()))?;
    let n = states.ok_or_else(|| TextModelError::Missing("states".into()))?;
    let m = actions.ok_or_else(|| TextModelError::Missing("actions".into()))?;
    let nz = observations.ok_or_else(|| TextModelError::Missing("observations".into()))?;
    let dense_t = transitions
        .into_iter()
        .enumerate()
        .map(|(a, t)| t.ok_or_else(|| TextModelError::Missing(format!("T: {a}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let dense_o = obs
        .into_iter()
        .enumerate()
        .map(|(a, o)| o.ok_or_else(|| TextModelError::Missing(format!("O: {a}"))))
        .collect::<Result<Vec<_>, _>>()?;
    check_block(&dense_t, n, n, "T")?;
    check_block(&dense_o, n, nz, "O")?;
    let rewards = rewards.ok_or_else(|| TextModelError::Missing("R".into()))?;
    if rewards.len() != n || rewards.iter().any(|r| r.len() != m) {
        return Err(ModelError::DimensionMismatch {
            what: "reward block",
            expected: n * m,
            found: rewards.iter().map(Vec::len).sum(),
        }
        .into());
    }
    let base = TabularMDP::new(Kernel::from_dense(&dense_t)?, rewards.concat(), discount)?;
    let b0 = match start {
        Some(p) => Belief::new(p)?,
        None => Belief::uniform(n),
    };
    Ok(TabularPOMDP::new(base, Kernel::from_dense(&dense_o)?, b0)?)
}

fn check_block(
    blocks: &[Vec<Vec<f64>>],
    rows: usize,
    cols: usize,
    what: &'static str,
) -> Result<(), ModelError> {
    for b in blocks {
        if b.len() != rows || b.iter().any(|r| r.len() != cols) {
            return Err(ModelError::DimensionMismatch {
                what,
                expected: rows * cols,
                found: b.iter().map(Vec::len).sum(),
            });
        }
    }
    Ok(())
}

fn parse_row(s: &str, line: usize) -> Result<Vec<f64>, TextModelError> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| syntax(line, format!("bad number {t:?}")))
        })
        .collect()
}
