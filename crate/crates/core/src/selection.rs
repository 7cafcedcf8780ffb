//! Feature selection: greedy forward wrapper search and incremental
//! evaluation of importance-ranked prefixes.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{make_split, CvContext, CvStrategy};
use crate::features::Dataset;
use crate::forest::Classifier;

/// Cross-validation protocol used to score candidate feature sets.
#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    pub classifier: &'a dyn Classifier,
    pub strategy: CvStrategy,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Wrapper,
    Importance,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 2] = [SelectionMethod::Wrapper, SelectionMethod::Importance];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::Wrapper => "wrapper",
            SelectionMethod::Importance => "importance",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown selection method `{s}` (expected wrapper or importance)"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub k: usize,
    pub added: String,
    pub selected: Vec<String>,
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    pub method: SelectionMethod,
    pub strategy: CvStrategy,
    pub folds: usize,
    pub seed: u64,
    pub classifier: serde_json::Value,
    pub steps: Vec<SelectionStep>,
    pub best_k: usize,
    pub best_subset: Vec<String>,
    /// Importance order of all features within each training fold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_rankings: Option<Vec<Vec<String>>>,
}

impl SelectionTrace {
    fn new(
        method: SelectionMethod,
        evaluator: &Evaluator<'_>,
        steps: Vec<SelectionStep>,
        fold_rankings: Option<Vec<Vec<String>>>,
    ) -> Self {
        let mut best = 0;
        for (i, s) in steps.iter().enumerate() {
            if s.mean_accuracy > steps[best].mean_accuracy {
                best = i;
            }
        }
        let best_subset = steps.get(best).map(|s| s.selected.clone()).unwrap_or_default();
        Self {
            fingerprint: None,
            method,
            strategy: evaluator.strategy,
            folds: evaluator.k,
            seed: evaluator.seed,
            classifier: evaluator.classifier.describe(),
            best_k: best_subset.len(),
            best_subset,
            steps,
            fold_rankings,
        }
    }

    /// Two-column `k,mean_accuracy` table.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("k,mean_accuracy\n");
        for s in &self.steps {
            out.push_str(&format!("{},{}\n", s.k, s.mean_accuracy));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn names(dataset: &Dataset, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&c| dataset.feature_names[c].clone()).collect()
}

fn check_dataset(dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() || dataset.n_features() == 0 {
        return Err(Error::EmptyInput("selection needs rows and features".into()));
    }
    Ok(())
}

/// Greedy forward selection: each step adds the candidate whose union with
/// the selected set has the highest mean CV accuracy. Ties go to the
/// candidate that comes first in the dataset's column order. All candidate
/// sets are scored on the same folds.
pub fn wrapper_forward(dataset: &Dataset, evaluator: &Evaluator<'_>, max_k: usize) -> Result<SelectionTrace> {
    check_dataset(dataset)?;
    if max_k == 0 || max_k > dataset.n_features() {
        return Err(Error::InvalidArgument(format!(
            "max_k must be in 1..={}, got {max_k}",
            dataset.n_features()
        )));
    }
    let split = make_split(dataset, evaluator.strategy, evaluator.k, evaluator.seed)?;
    let ctx = CvContext::new(dataset, &split)?;
    let mut selected: Vec<usize> = Vec::new();
    let mut steps = Vec::with_capacity(max_k);

    for k in 1..=max_k {
        let candidates: Vec<usize> = (0..dataset.n_features()).filter(|c| !selected.contains(c)).collect();
        let scored = candidates
            .par_iter()
            .map(|&c| {
                let mut set = selected.clone();
                set.push(c);
                let acc = ctx.accuracies(&sorted(set), evaluator.classifier)?;
                Ok((c, acc))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (i, (_, acc)) in scored.iter().enumerate() {
            if mean(acc) > mean(&scored[best].1) {
                best = i;
            }
        }
        let (added, fold_accuracies) = scored.into_iter().nth(best).expect("candidates non-empty");
        selected.push(added);
        log::debug!("wrapper step {k}: {}", dataset.feature_names[added]);
        steps.push(SelectionStep {
            k,
            added: dataset.feature_names[added].clone(),
            selected: names(dataset, &selected),
            mean_accuracy: mean(&fold_accuracies),
            fold_accuracies,
        });
    }
    Ok(SelectionTrace::new(SelectionMethod::Wrapper, evaluator, steps, None))
}

/// Indices sorted by decreasing importance, lowest index first on ties.
fn rank_by(importance: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..importance.len()).collect();
    idx.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    idx
}

/// Ranks features by model importance within each training fold and scores
/// every prefix length `1..=p`.
///
/// Fold `f` evaluates the top-`k` features of its own ranking, so held-out
/// rows never influence the order. The steps report a consensus order from
/// the mean of the fold importances; the per-fold orders are kept in
/// `fold_rankings`.
pub fn importance_ranked(dataset: &Dataset, evaluator: &Evaluator<'_>) -> Result<SelectionTrace> {
    check_dataset(dataset)?;
    let split = make_split(dataset, evaluator.strategy, evaluator.k, evaluator.seed)?;
    let ctx = CvContext::new(dataset, &split)?;
    let p = dataset.n_features();
    let all: Vec<usize> = (0..p).collect();

    let importances = (0..ctx.k())
        .into_par_iter()
        .map(|f| {
            let fitted = ctx.fit_fold(f, &all, evaluator.classifier)?;
            fitted
                .model
                .feature_importance()
                .ok_or_else(|| Error::Precondition("classifier does not expose feature importance".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let rankings: Vec<Vec<usize>> = importances.iter().map(|imp| rank_by(imp)).collect();

    let mut consensus = vec![0.0; p];
    for imp in &importances {
        for (c, v) in consensus.iter_mut().zip(imp) {
            *c += v / importances.len() as f64;
        }
    }
    let consensus = rank_by(&consensus);

    let jobs: Vec<(usize, usize)> = (1..=p).flat_map(|k| (0..ctx.k()).map(move |f| (k, f))).collect();
    let accuracies = jobs
        .par_iter()
        .map(|&(k, f)| {
            let subset = sorted(rankings[f][..k].to_vec());
            Ok(ctx.score_fold(f, &subset, evaluator.classifier)?.accuracy)
        })
        .collect::<Result<Vec<f64>>>()?;

    let steps = (1..=p)
        .map(|k| {
            let fold_accuracies = accuracies[(k - 1) * ctx.k()..k * ctx.k()].to_vec();
            SelectionStep {
                k,
                added: dataset.feature_names[consensus[k - 1]].clone(),
                selected: names(dataset, &consensus[..k]),
                mean_accuracy: mean(&fold_accuracies),
                fold_accuracies,
            }
        })
        .collect();
    let fold_rankings = rankings.iter().map(|r| names(dataset, r)).collect();
    Ok(SelectionTrace::new(
        SelectionMethod::Importance,
        evaluator,
        steps,
        Some(fold_rankings),
    ))
}

pub fn select(
    dataset: &Dataset,
    method: SelectionMethod,
    evaluator: &Evaluator<'_>,
    max_k: Option<usize>,
) -> Result<SelectionTrace> {
    match method {
        SelectionMethod::Wrapper => wrapper_forward(dataset, evaluator, max_k.unwrap_or(dataset.n_features())),
        SelectionMethod::Importance => importance_ranked(dataset, evaluator),
    }
}

/// A named feature set chosen by a selection run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub method: SelectionMethod,
    pub k: usize,
    pub features: Vec<String>,
}

impl FeatureSubset {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let subset: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if subset.features.len() != subset.k {
            return Err(Error::Schema(format!(
                "subset declares k = {} but lists {} features",
                subset.k,
                subset.features.len()
            )));
        }
        Ok(subset)
    }
}

/// The first `k` features of a trace.
pub fn top_k(trace: &SelectionTrace, k: usize) -> Result<FeatureSubset> {
    if k == 0 || k > trace.steps.len() {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            trace.steps.len()
        )));
    }
    Ok(FeatureSubset {
        method: trace.method,
        k,
        features: trace.steps[k - 1].selected.clone(),
    })
}
