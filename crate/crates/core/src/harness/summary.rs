//! Aggregation of trial records and the CSV formats.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::trial::TrialRecord;

/// Mean with a normal-approximation 95% half-width `1.96·s/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Stat {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &Stat) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

pub fn mean_ci(values: &[f64]) -> Stat {
    let n = values.len();
    if n == 0 {
        return Stat {
            mean: f64::NAN,
            half_width: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half_width = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * var.sqrt() / (n as f64).sqrt()
    };
    Stat {
        mean,
        half_width,
        n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub point: usize,
    pub axis_value: Option<f64>,
    pub agent: String,
    pub trials: usize,
    pub steps: Stat,
    pub reward: Stat,
    pub successes: Stat,
    pub completion_rate: f64,
    pub final_entropy: Option<Stat>,
    pub identification_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, point: usize, agent: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.point == point && r.agent == agent)
    }
}

/// Groups keyed by `(point, agent)` in order of first appearance.
fn groups(records: &[TrialRecord]) -> Vec<((usize, String), Vec<&TrialRecord>)> {
    let mut out: Vec<((usize, String), Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        match out
            .iter_mut()
            .find(|(k, _)| k.0 == r.point && k.1 == r.agent)
        {
            Some((_, v)) => v.push(r),
            None => out.push(((r.point, r.agent.clone()), vec![r])),
        }
    }
    out
}

pub fn summarize(records: &[TrialRecord]) -> SummaryTable {
    let rows = groups(records)
        .into_iter()
        .map(|((point, agent), rs)| {
            let col = |f: &dyn Fn(&TrialRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let finals: Vec<f64> = rs
                .iter()
                .filter_map(|r| r.entropy.last().copied())
                .collect();
            let ids: Vec<bool> = rs.iter().filter_map(|r| r.identified).collect();
            SummaryRow {
                point,
                axis_value: rs[0].axis_value,
                agent,
                trials: rs.len(),
                steps: mean_ci(&col(&|r| r.steps as f64)),
                reward: mean_ci(&col(&|r| r.cumulative_reward)),
                successes: mean_ci(&col(&|r| r.successes as f64)),
                completion_rate: rs.iter().filter(|r| r.completed).count() as f64 / rs.len() as f64,
                final_entropy: (!finals.is_empty()).then(|| mean_ci(&finals)),
                identification_rate: (!ids.is_empty())
                    .then(|| ids.iter().filter(|&&b| b).count() as f64 / ids.len() as f64),
            }
        })
        .collect();
    SummaryTable { rows }
}

/// Mean posterior entropy per step for one `(point, agent)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub point: usize,
    pub agent: String,
    pub mean: Vec<f64>,
}

/// Averages entropy sequences across trials; an episode that ended early
/// keeps contributing its final entropy.
pub fn entropy_curves(records: &[TrialRecord]) -> Vec<EntropyCurve> {
    groups(records)
        .into_iter()
        .filter(|(_, rs)| rs.iter().all(|r| !r.entropy.is_empty()))
        .map(|((point, agent), rs)| {
            let len = rs.iter().map(|r| r.entropy.len()).max().unwrap_or(0);
            let mean = (0..len)
                .map(|t| {
                    rs.iter()
                        .map(|r| {
                            *r.entropy
                                .get(t)
                                .unwrap_or_else(|| r.entropy.last().unwrap())
                        })
                        .sum::<f64>()
                        / rs.len() as f64
                })
                .collect();
            EntropyCurve { point, agent, mean }
        })
        .collect()
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const TRIALS_HEADER: &str = "config_hash,point,axis_value,agent,target,target_label,trial,steps,completed,cumulative_reward,successes,final_entropy,identified,bound_target_holds,bound_uniform_holds,posterior_resets";

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = format!("{TRIALS_HEADER}\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.config_hash,
            r.point,
            opt(r.axis_value),
            r.agent,
            r.target,
            r.target_label,
            r.trial,
            r.steps,
            r.completed,
            r.cumulative_reward,
            r.successes,
            opt(r.entropy.last()),
            opt(r.identified),
            opt(r.bound_target.as_ref().map(|b| b.holds)),
            opt(r.bound_uniform.as_ref().map(|b| b.holds)),
            r.posterior_resets,
        )
        .unwrap();
    }
    out
}

pub const SUMMARY_HEADER: &str = "point,axis_value,agent,trials,steps_mean,steps_ci95,reward_mean,reward_ci95,successes_mean,successes_ci95,completion_rate,final_entropy_mean,final_entropy_ci95,identification_rate";

pub fn summary_csv(table: &SummaryTable) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.point,
            opt(r.axis_value),
            r.agent,
            r.trials,
            r.steps.mean,
            r.steps.half_width,
            r.reward.mean,
            r.reward.half_width,
            r.successes.mean,
            r.successes.half_width,
            r.completion_rate,
            opt(r.final_entropy.map(|s| s.mean)),
            opt(r.final_entropy.map(|s| s.half_width)),
            opt(r.identification_rate),
        )
        .unwrap();
    }
    out
}

pub fn entropy_csv(curves: &[EntropyCurve]) -> String {
    let mut out = String::from("point,agent,t,mean_entropy\n");
    for c in curves {
        for (t, h) in c.mean.iter().enumerate() {
            writeln!(out, "{},{},{},{}", c.point, c.agent, t, h).unwrap();
        }
    }
    out
}
