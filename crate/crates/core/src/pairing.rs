//! Delta-thresholded pairwise training set.
//!
//! For every pair of rows `i < j` whose ratings differ by at least `delta`,
//! the pair set stores the feature difference `x_i - x_j` and the label
//! `sign(y_i - y_j)`. Pairs with equal ratings are never included, even at
//! `delta = 0`, since their label would be zero.

use rand::seq::index;
use thiserror::Error;

use crate::cohort::{Cohort, CohortError};
use crate::matrix::Matrix;
use crate::seed;

/// Pair cap used by the models when none is configured.
pub const DEFAULT_PAIR_CAP: usize = 200_000;

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("need at least 2 rows to form pairs, got {0}")]
    TooFewRows(usize),
    #[error("delta must be finite and non-negative, got {0}")]
    InvalidDelta(f64),
    #[error("no pair of rows has a rating difference of at least {delta} (delta too large)")]
    EmptyPairSet { delta: f64 },
    #[error(transparent)]
    Cohort(#[from] CohortError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    /// One row per pair: `x_i - x_j`.
    pub diffs: Matrix,
    /// `sign(y_i - y_j)`, always -1.0 or +1.0.
    pub signs: Vec<f64>,
    /// Cohort row indices `(i, j)` with `i < j`.
    pub index_pairs: Vec<(usize, usize)>,
    pub delta: f64,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    /// Subset of pairs, in the given order.
    pub fn select(&self, idx: &[usize]) -> PairSet {
        PairSet {
            diffs: self.diffs.select_rows(idx),
            signs: idx.iter().map(|&p| self.signs[p]).collect(),
            index_pairs: idx.iter().map(|&p| self.index_pairs[p]).collect(),
            delta: self.delta,
        }
    }
}

/// Builds all pairs over `rows` with `|y_i - y_j| >= delta` and `y_i != y_j`.
///
/// `rows` may be in any order; duplicates are ignored. Pairs come out in
/// lexicographic `(i, j)` order of cohort indices.
pub fn build_pairs(cohort: &Cohort, rows: &[usize], delta: f64) -> Result<PairSet, PairingError> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(PairingError::InvalidDelta(delta));
    }
    cohort.check_rows(rows)?;
    let mut rows = rows.to_vec();
    rows.sort_unstable();
    rows.dedup();
    if rows.len() < 2 {
        return Err(PairingError::TooFewRows(rows.len()));
    }

    let y = cohort.rating();
    let x = cohort.features();
    let m = cohort.m();
    let mut data = Vec::new();
    let mut signs = Vec::new();
    let mut index_pairs = Vec::new();
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let d = y[i] - y[j];
            if d == 0.0 || d.abs() < delta {
                continue;
            }
            data.extend(x.row(i).iter().zip(x.row(j)).map(|(u, v)| u - v));
            signs.push(d.signum());
            index_pairs.push((i, j));
        }
    }
    if signs.is_empty() {
        return Err(PairingError::EmptyPairSet { delta });
    }
    Ok(PairSet {
        diffs: Matrix::from_vec(signs.len(), m, data),
        signs,
        index_pairs,
        delta,
    })
}

/// Uniform random subset of `cap` pairs (identity when `len() <= cap`).
/// The selection depends only on `seed`; the original order is preserved.
pub fn subsample_pairs(pairs: &PairSet, cap: usize, seed: u64) -> PairSet {
    let cap = cap.max(1);
    if pairs.len() <= cap {
        return pairs.clone();
    }
    let mut rng = seed::rng(seed);
    let mut idx = index::sample(&mut rng, pairs.len(), cap).into_vec();
    idx.sort_unstable();
    pairs.select(&idx)
}
