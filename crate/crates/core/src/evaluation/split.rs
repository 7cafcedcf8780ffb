//! Fold assignment: random over segments, or whole users per fold.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Dataset;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvStrategy {
    Random,
    UserGrouped,
}

impl CvStrategy {
    pub fn name(self) -> &'static str {
        match self {
            CvStrategy::Random => "random",
            CvStrategy::UserGrouped => "user_grouped",
        }
    }
}

impl fmt::Display for CvStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CvStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(CvStrategy::Random),
            "user_grouped" | "user-grouped" | "grouped" | "user" => Ok(CvStrategy::UserGrouped),
            other => Err(Error::InvalidArgument(format!(
                "unknown CV strategy `{other}` (expected random or user_grouped)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSplit {
    /// Fold id of every dataset row.
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub strategy: CvStrategy,
    pub seed: u64,
}

impl CvSplit {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    Ok(())
}

/// Deals a seeded permutation of the rows into `k` folds round-robin.
///
/// The permutation is applied to rows in segment-reference order, so the
/// assignment follows rows rather than their positions in the table.
pub fn split_random(dataset: &Dataset, k: usize, seed: u64) -> Result<CvSplit> {
    check_k(k)?;
    if dataset.len() < k {
        return Err(Error::Precondition(format!(
            "{} rows cannot fill {k} folds",
            dataset.len()
        )));
    }
    let mut order = dataset.canonical_order();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; dataset.len()];
    for (i, &row) in order.iter().enumerate() {
        fold_of[row] = i % k;
    }
    Ok(CvSplit {
        fold_of,
        k,
        strategy: CvStrategy::Random,
        seed,
    })
}

/// Assigns whole users to folds, largest users first, each to the fold
/// with the fewest rows so far (lowest fold id on ties). Users with equal
/// row counts are ordered by a seeded shuffle.
pub fn split_user_grouped(dataset: &Dataset, k: usize, seed: u64) -> Result<CvSplit> {
    check_k(k)?;
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &dataset.rows {
        *sizes.entry(r.user_id.as_str()).or_default() += 1;
    }
    if sizes.len() < k {
        return Err(Error::Precondition(format!(
            "{} users cannot fill {k} folds",
            sizes.len()
        )));
    }
    let mut users: Vec<(&str, usize)> = sizes.into_iter().collect();
    users.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    users.sort_by_key(|u| std::cmp::Reverse(u.1));

    let mut load = vec![0usize; k];
    let mut fold_of_user: BTreeMap<&str, usize> = BTreeMap::new();
    for (user, n) in users {
        let f = (0..k).min_by_key(|&f| (load[f], f)).expect("k >= 2");
        load[f] += n;
        fold_of_user.insert(user, f);
    }
    let fold_of = dataset.rows.iter().map(|r| fold_of_user[r.user_id.as_str()]).collect();
    Ok(CvSplit {
        fold_of,
        k,
        strategy: CvStrategy::UserGrouped,
        seed,
    })
}

pub fn make_split(dataset: &Dataset, strategy: CvStrategy, k: usize, seed: u64) -> Result<CvSplit> {
    match strategy {
        CvStrategy::Random => split_random(dataset, k, seed),
        CvStrategy::UserGrouped => split_user_grouped(dataset, k, seed),
    }
}
