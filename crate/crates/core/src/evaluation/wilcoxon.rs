//! Wilcoxon signed-rank tests.
//!
//! Zero differences are discarded and tied magnitudes receive average
//! ranks. Up to [`EXACT_MAX_N`] non-zero differences the p-values are exact:
//! the null distribution of the positive rank sum is counted over all `2^n`
//! sign assignments. Larger samples use the normal approximation with tie
//! correction and no continuity correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// The smaller of the two signed-rank sums.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub n_effective: usize,
    /// Alternative: differences tend to be positive.
    pub p_greater: f64,
    /// Alternative: differences tend to be negative.
    pub p_less: f64,
    pub p_two_sided: f64,
    pub method: PValueMethod,
}

/// Average ranks of `values`, doubled so they stay integral.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1, average (i+j+2)/2
        let r = (i + j + 2) as u64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments giving each doubled positive-rank sum.
fn null_counts(ranks: &[u64]) -> Vec<u64> {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Signed-rank test on a vector of differences.
pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<WilcoxonResult> {
    if differences.iter().any(|d| d.is_nan()) {
        return Err(Error::InvalidArgument("differences contain NaN".into()));
    }
    let d: Vec<f64> = differences.iter().copied().filter(|&v| v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n_effective: 0,
            p_greater: 1.0,
            p_less: 1.0,
            p_two_sided: 1.0,
            method: PValueMethod::Exact,
        });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let total2: u64 = ranks.iter().sum();
    let plus2: u64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let minus2 = total2 - plus2;

    let (p_greater, p_less, method) = if n <= EXACT_MAX_N {
        let counts = null_counts(&ranks);
        let all = (1u64 << n) as f64;
        let ge: u64 = counts[plus2 as usize..].iter().sum();
        let le: u64 = counts[..=plus2 as usize].iter().sum();
        (ge as f64 / all, le as f64 / all, PValueMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        for group in sorted.chunk_by(|a, b| a == b) {
            let t = group.len() as f64;
            tie_term += t * t * t - t;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            (1.0, 1.0, PValueMethod::Normal)
        } else {
            let z = (plus2 as f64 / 2.0 - mean) / var.sqrt();
            let normal = Normal::standard();
            (normal.sf(z), normal.cdf(z), PValueMethod::Normal)
        }
    };
    let w_plus = plus2 as f64 / 2.0;
    let w_minus = minus2 as f64 / 2.0;
    Ok(WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        n_effective: n,
        p_greater,
        p_less,
        p_two_sided: (2.0 * p_greater.min(p_less)).min(1.0),
        method,
    })
}

/// Paired test on `x[i] - y[i]`.
pub fn wilcoxon_paired(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("paired samples are empty".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    wilcoxon_signed_rank(&d)
}

/// One-sample test of `x` against the constant `mu`.
pub fn wilcoxon_one_sample(x: &[f64], mu: f64) -> Result<WilcoxonResult> {
    wilcoxon_paired(x, &vec![mu; x.len()])
}
