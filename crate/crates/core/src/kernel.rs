//! Compressed row-stochastic kernels.
//!
//! Every kernel in the toolkit (transitions `T[a][x][x']`, observations
//! `O[a][x'][z]`, joint MMDP transitions) is a stack of probability rows, one
//! per `(action, state)` pair. Rows are stored in a compressed sparse layout:
//! the benchmark models have at most a handful of successors per row, so the
//! solvers iterate over non-zeros only.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Tolerance on row sums and distribution sums.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// A stack of probability rows indexed by `(action, state)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    num_actions: usize,
    num_rows: usize,
    num_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    probs: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from per-row entry lists ordered `a * num_rows + x`.
    ///
    /// Duplicate columns inside a row are summed and zero entries dropped.
    pub fn from_rows(
        num_actions: usize,
        num_rows: usize,
        num_cols: usize,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self, ModelError> {
        if rows.len() != num_actions * num_rows {
            return Err(ModelError::DimensionMismatch {
                what: "kernel rows",
                expected: num_actions * num_rows,
                found: rows.len(),
            });
        }
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        offsets.push(0);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let mut sum = 0.0;
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut p = 0.0;
                while i < row.len() && row[i].0 == c {
                    let v = row[i].1;
                    if !(v >= 0.0) || !v.is_finite() {
                        return Err(ModelError::NegativeProbability { row: r, value: v });
                    }
                    p += v;
                    i += 1;
                }
                if c >= num_cols {
                    return Err(ModelError::DimensionMismatch {
                        what: "kernel column",
                        expected: num_cols,
                        found: c,
                    });
                }
                if p > 0.0 {
                    cols.push(c as u32);
                    probs.push(p);
                    sum += p;
                }
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ModelError::NotStochastic { row: r, sum });
            }
            offsets.push(cols.len());
        }
        Ok(Self {
            num_actions,
            num_rows,
            num_cols,
            offsets,
            cols,
            probs,
        })
    }

    /// Builds a kernel from a dense `[a][x][col]` array.
    pub fn from_dense(dense: &[Vec<Vec<f64>>]) -> Result<Self, ModelError> {
        let num_actions = dense.len();
        let num_rows = dense.first().map_or(0, Vec::len);
        let num_cols = dense.first().and_then(|m| m.first()).map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(num_actions * num_rows);
        for m in dense {
            if m.len() != num_rows {
                return Err(ModelError::DimensionMismatch {
                    what: "dense kernel rows",
                    expected: num_rows,
                    found: m.len(),
                });
            }
            for row in m {
                if row.len() != num_cols {
                    return Err(ModelError::DimensionMismatch {
                        what: "dense kernel columns",
                        expected: num_cols,
                        found: row.len(),
                    });
                }
                rows.push(row.iter().copied().enumerate().collect());
            }
        }
        Self::from_rows(num_actions, num_rows, num_cols, rows)
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    /// Non-zero columns and probabilities of row `(a, x)`, columns ascending.
    #[inline]
    pub fn row(&self, a: usize, x: usize) -> (&[u32], &[f64]) {
        let r = a * self.num_rows + x;
        let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
        (&self.cols[lo..hi], &self.probs[lo..hi])
    }

    /// Iterator over `(column, probability)` of row `(a, x)`.
    #[inline]
    pub fn entries(&self, a: usize, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (c, p) = self.row(a, x);
        c.iter().map(|&c| c as usize).zip(p.iter().copied())
    }

    /// Probability of column `col` in row `(a, x)`.
    pub fn prob(&self, a: usize, x: usize, col: usize) -> f64 {
        let (c, p) = self.row(a, x);
        match c.binary_search(&(col as u32)) {
            Ok(i) => p[i],
            Err(_) => 0.0,
        }
    }

    /// Dense copy of row `(a, x)`.
    pub fn dense_row(&self, a: usize, x: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_cols];
        for (c, p) in self.entries(a, x) {
            out[c] = p;
        }
        out
    }

    /// Number of stored non-zero entries.
    pub fn nnz(&self) -> usize {
        self.probs.len()
    }

    /// Re-checks row-stochasticity, e.g. after deserialization.
    pub fn validate(&self) -> Result<(), ModelError> {
        let rows = self.num_actions * self.num_rows;
        if self.offsets.len() != rows + 1
            || self.cols.len() != self.probs.len()
            || self.offsets.last().copied() != Some(self.probs.len())
        {
            return Err(ModelError::Corrupt("kernel offsets inconsistent"));
        }
        for r in 0..rows {
            let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
            if lo > hi {
                return Err(ModelError::Corrupt("kernel offsets not monotone"));
            }
            let mut sum = 0.0;
            for i in lo..hi {
                if self.cols[i] as usize >= self.num_cols {
                    return Err(ModelError::Corrupt("kernel column out of range"));
                }
                if !(self.probs[i] >= 0.0) {
                    return Err(ModelError::NegativeProbability {
                        row: r,
                        value: self.probs[i],
                    });
                }
                sum += self.probs[i];
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ModelError::NotStochastic { row: r, sum });
            }
        }
        Ok(())
    }
}

/// Checks that `p` is a probability vector within [`STOCHASTIC_TOL`].
pub fn check_distribution(p: &[f64]) -> Result<(), ModelError> {
    if p.is_empty() {
        return Err(ModelError::EmptyDistribution);
    }
    let mut sum = 0.0;
    for &v in p {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(ModelError::NegativeProbability { row: 0, value: v });
        }
        sum += v;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(ModelError::NotStochastic { row: 0, sum });
    }
    Ok(())
}
