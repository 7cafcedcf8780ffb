//! Cross-validation, classification metrics and signed-rank tests.

mod metrics;
mod split;
mod wilcoxon;

pub use metrics::{ClassMetrics, ConfusionMatrix};
pub use split::{make_split, split_random, split_user_grouped, CvSplit, CvStrategy, DEFAULT_FOLDS};
pub use wilcoxon::{
    wilcoxon_one_sample, wilcoxon_paired, wilcoxon_signed_rank, PValueMethod, WilcoxonResult, EXACT_MAX_N,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Dataset;
use crate::forest::{majority, Classifier, Predictor};
use crate::matrix::Matrix;
use crate::preprocess::Scaler;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl Aggregate {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = metrics::mean_std(values);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Content hash of the run configuration, filled in by the caller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    pub features: Vec<String>,
    pub label_scheme: String,
    pub classes: Vec<String>,
    pub strategy: CvStrategy,
    pub k: usize,
    pub seed: u64,
    pub classifier: serde_json::Value,
    pub folds: Vec<FoldResult>,
    pub accuracy: Aggregate,
    pub macro_f1: Aggregate,
}

impl EvalReport {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }

    pub fn fold_macro_f1(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.macro_f1).collect()
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.folds.iter().flat_map(|f| f.warnings.iter().map(String::as_str))
    }
}

/// A fitted fold: the model, and the held-out rows scaled with the
/// training-fold scaler.
pub(crate) struct FittedFold {
    pub model: Box<dyn Predictor>,
    pub test_x: Matrix,
    pub test_y: Vec<usize>,
    pub n_train: usize,
    pub warnings: Vec<String>,
}

/// Dataset matrix and fold row lists prepared once for repeated evaluation.
pub(crate) struct CvContext<'a> {
    pub dataset: &'a Dataset,
    pub split: &'a CvSplit,
    pub x: Matrix,
    pub y: Vec<usize>,
    pub classes: Vec<String>,
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
}

impl<'a> CvContext<'a> {
    pub fn new(dataset: &'a Dataset, split: &'a CvSplit) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput("dataset has no rows".into()));
        }
        if split.fold_of.len() != dataset.len() || split.fold_of.iter().any(|&f| f >= split.k) {
            return Err(Error::Precondition("split does not match dataset".into()));
        }
        let mut rank = vec![0usize; dataset.len()];
        for (pos, row) in dataset.canonical_order().into_iter().enumerate() {
            rank[row] = pos;
        }
        let by_rank = |mut rows: Vec<usize>| {
            rows.sort_by_key(|&r| rank[r]);
            rows
        };
        let train: Vec<Vec<usize>> = (0..split.k).map(|f| by_rank(split.train_rows(f))).collect();
        let test: Vec<Vec<usize>> = (0..split.k).map(|f| by_rank(split.test_rows(f))).collect();
        if let Some(f) = (0..split.k).find(|&f| train[f].is_empty() || test[f].is_empty()) {
            return Err(Error::Precondition(format!("fold {f} has an empty train or test side")));
        }
        let (classes, y) = dataset.class_indices();
        Ok(Self {
            dataset,
            split,
            x: dataset.matrix(),
            y,
            classes,
            train,
            test,
        })
    }

    pub fn k(&self) -> usize {
        self.split.k
    }

    pub fn fold_seed(&self, fold: usize) -> u64 {
        derive_seed(self.split.seed, fold as u64)
    }

    pub fn fit_fold(&self, fold: usize, features: &[usize], classifier: &dyn Classifier) -> Result<FittedFold> {
        let (train, test) = (&self.train[fold], &self.test[fold]);
        let names = features.iter().map(|&c| self.dataset.feature_names[c].clone()).collect();
        let mut train_x = self.x.select(train, features);
        let mut test_x = self.x.select(test, features);
        let all: Vec<usize> = (0..train.len()).collect();
        let scaler = Scaler::fit_rows(names, &train_x, &all)?;
        scaler.transform_matrix(&mut train_x)?;
        scaler.transform_matrix(&mut test_x)?;
        let train_y: Vec<usize> = train.iter().map(|&r| self.y[r]).collect();

        let mut present = vec![false; self.classes.len()];
        train_y.iter().for_each(|&c| present[c] = true);
        let mut warnings = Vec::new();
        for (c, name) in self.classes.iter().enumerate() {
            if !present[c] && test.iter().any(|&r| self.y[r] == c) {
                warnings.push(format!("fold {fold}: class `{name}` absent from training rows"));
            }
        }
        let model = classifier.fit(&train_x, &train_y, self.classes.len(), self.fold_seed(fold))?;
        Ok(FittedFold {
            model,
            test_x,
            test_y: test.iter().map(|&r| self.y[r]).collect(),
            n_train: train.len(),
            warnings,
        })
    }

    pub fn score_fold(&self, fold: usize, features: &[usize], classifier: &dyn Classifier) -> Result<FoldResult> {
        let fitted = self.fit_fold(fold, features, classifier)?;
        Ok(score(fold, fitted, self.classes.clone()))
    }

    pub fn score_all(&self, features: &[usize], classifier: &dyn Classifier) -> Result<Vec<FoldResult>> {
        (0..self.k())
            .into_par_iter()
            .map(|f| self.score_fold(f, features, classifier))
            .collect()
    }

    pub fn accuracies(&self, features: &[usize], classifier: &dyn Classifier) -> Result<Vec<f64>> {
        Ok(self.score_all(features, classifier)?.iter().map(|f| f.accuracy).collect())
    }
}

pub(crate) fn score(fold: usize, fitted: FittedFold, classes: Vec<String>) -> FoldResult {
    let preds: Vec<usize> = fitted.test_x.rows().map(|r| fitted.model.predict_row(r)).collect();
    let confusion =
        ConfusionMatrix::from_predictions(classes, &fitted.test_y, &preds).expect("predictions within class set");
    FoldResult {
        fold,
        n_train: fitted.n_train,
        n_test: fitted.test_y.len(),
        accuracy: confusion.accuracy(),
        macro_f1: confusion.macro_f1(),
        per_class: confusion.per_class(),
        confusion,
        warnings: fitted.warnings,
    }
}

/// Validates and canonicalizes a feature index subset: sorted, unique and
/// in range.
pub fn normalize_subset(dataset: &Dataset, features: &[usize]) -> Result<Vec<usize>> {
    let mut f = features.to_vec();
    f.sort_unstable();
    f.dedup();
    if f.is_empty() {
        return Err(Error::InvalidArgument("feature subset is empty".into()));
    }
    if f.last().is_some_and(|&c| c >= dataset.n_features()) {
        return Err(Error::Schema("feature index out of range".into()));
    }
    Ok(f)
}

/// Runs k-fold cross-validation on the given feature columns.
///
/// Each fold fits the min-max scaler on its training rows only, trains with
/// a seed derived from the split seed and the fold index, and scores the
/// held-out rows. Rows are fed in segment-reference order, so reordering
/// the dataset leaves the report unchanged.
pub fn cross_validate(
    dataset: &Dataset,
    split: &CvSplit,
    classifier: &dyn Classifier,
    features: &[usize],
) -> Result<EvalReport> {
    let features = normalize_subset(dataset, features)?;
    let ctx = CvContext::new(dataset, split)?;
    let folds = ctx.score_all(&features, classifier)?;
    for w in folds.iter().flat_map(|f| &f.warnings) {
        log::warn!("{w}");
    }
    let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let f1: Vec<f64> = folds.iter().map(|f| f.macro_f1).collect();
    Ok(EvalReport {
        fingerprint: None,
        features: features.iter().map(|&c| dataset.feature_names[c].clone()).collect(),
        label_scheme: dataset.label_scheme.clone(),
        classes: ctx.classes.clone(),
        strategy: split.strategy,
        k: split.k,
        seed: split.seed,
        classifier: classifier.describe(),
        folds,
        accuracy: Aggregate::of(&acc),
        macro_f1: Aggregate::of(&f1),
    })
}

/// Cross-validates on every feature column.
pub fn cross_validate_all(dataset: &Dataset, split: &CvSplit, classifier: &dyn Classifier) -> Result<EvalReport> {
    let all: Vec<usize> = (0..dataset.n_features()).collect();
    cross_validate(dataset, split, classifier, &all)
}

/// Baseline that always predicts the most frequent training class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MajorityClassifier;

struct Constant(usize);

impl Predictor for Constant {
    fn predict_row(&self, _row: &[f64]) -> usize {
        self.0
    }
}

impl Classifier for MajorityClassifier {
    fn fit(&self, _x: &Matrix, y: &[usize], n_classes: usize, _seed: u64) -> Result<Box<dyn Predictor>> {
        let mut counts = vec![0u64; n_classes];
        for &c in y {
            counts[c] += 1;
        }
        Ok(Box::new(Constant(majority(&counts))))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "majority" })
    }
}
