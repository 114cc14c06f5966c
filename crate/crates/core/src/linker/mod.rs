//! Linking signatures to grade: a random-forest low/high classifier with
//! impurity importance, LASSO grade regression, and leave-one-out
//! evaluation of both.

mod forest;
mod lasso;
mod metrics;
mod report;

pub use forest::{fit_forest, ForestConfig, ForestModel, Tree};
pub use lasso::{fit_lasso, lasso_objective, soft_threshold, LassoModel, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use metrics::{
    confusion_metrics, importance_stability, modal_top_set, ranking, spearman, ConfusionMetrics, CoreMetrics,
    ImportanceStat,
};
pub use report::{
    importance_svg, regression_svg, write_importance_csv, write_metrics_json, write_regression_csv,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::signature::Signature;

pub const DEFAULT_ALPHAS: [f64; 5] = [0.001, 0.01, 0.05, 0.1, 0.5];

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSignature {
    pub case_id: String,
    pub features: Vec<f64>,
    pub grade: u8,
}

impl LabeledSignature {
    pub fn new(grade: u8, signature: &Signature) -> Self {
        Self {
            case_id: signature.case_id.clone(),
            features: signature.proportions.clone(),
            grade,
        }
    }

    /// Grades 2 and 3 are high, 0 and 1 low.
    pub fn is_high(&self) -> bool {
        self.grade >= 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BinaryForest,
    GradeLasso,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub n_trees: usize,
    /// Features tried per split; `⌈√k⌉` when unset.
    pub mtry: Option<usize>,
    /// Candidate LASSO penalties, chosen per fold by inner leave-one-out.
    pub alphas: Vec<f64>,
    pub lasso_max_iter: usize,
    pub lasso_tol: f64,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            alphas: DEFAULT_ALPHAS.to_vec(),
            lasso_max_iter: DEFAULT_MAX_ITER,
            lasso_tol: DEFAULT_TOL,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassPrediction {
    pub case_id: String,
    pub grade: u8,
    pub truth_high: bool,
    pub predicted_high: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldFailure {
    pub case_id: String,
    pub reason: String,
}

/// Leave-one-out result of a binary classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryReport {
    pub metrics: ConfusionMetrics,
    pub predictions: Vec<ClassPrediction>,
    /// Held-out case of each failed fold; excluded from the metrics.
    pub failed_folds: Vec<FoldFailure>,
    /// Importance vector of each successful fold, in fold order.
    pub fold_importance: Vec<Vec<f64>>,
    pub importance: Vec<ImportanceStat>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradePrediction {
    pub case_id: String,
    pub true_grade: u8,
    pub predicted: f64,
    pub alpha: f64,
}

/// Leave-one-out result of the LASSO regression.
#[derive(Clone, Debug, PartialEq)]
pub struct LassoReport {
    pub predictions: Vec<GradePrediction>,
    pub spearman: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LooReport {
    Forest(BinaryReport),
    Lasso(LassoReport),
}

fn check_data(data: &[LabeledSignature]) -> Result<usize> {
    if data.len() < 3 {
        return Err(Error::Input(format!("{} cases; leave-one-out needs at least 3", data.len())));
    }
    let k = data[0].features.len();
    if k == 0 || data.iter().any(|d| d.features.len() != k) {
        return Err(Error::InvalidShape("signatures differ in length".into()));
    }
    Ok(k)
}

fn without<T: Clone>(v: &[T], i: usize) -> Vec<T> {
    v.iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, x)| x.clone())
        .collect()
}

/// Leave-one-out harness for a binary rule. `classify(train_x, train_y,
/// test_x, fold)` returns the held-out prediction and an importance vector
/// (possibly empty). Folds failing with a degenerate-label error are
/// recorded and skipped.
pub fn loo_binary<F>(data: &[LabeledSignature], classify: F) -> Result<BinaryReport>
where
    F: Fn(&[Vec<f64>], &[bool], &[f64], usize) -> Result<(bool, Vec<f64>)> + Sync,
{
    check_data(data)?;
    let x: Vec<Vec<f64>> = data.iter().map(|d| d.features.clone()).collect();
    let y: Vec<bool> = data.iter().map(LabeledSignature::is_high).collect();
    let folds: Vec<Result<(bool, Vec<f64>)>> = (0..data.len())
        .into_par_iter()
        .map(|i| classify(&without(&x, i), &without(&y, i), &x[i], i))
        .collect();

    let mut predictions = Vec::new();
    let mut failed_folds = Vec::new();
    let mut fold_importance = Vec::new();
    for (d, fold) in data.iter().zip(folds) {
        match fold {
            Ok((high, imp)) => {
                predictions.push(ClassPrediction {
                    case_id: d.case_id.clone(),
                    grade: d.grade,
                    truth_high: d.is_high(),
                    predicted_high: high,
                });
                fold_importance.push(imp);
            }
            Err(e @ Error::DegenerateLabel(_)) => failed_folds.push(FoldFailure {
                case_id: d.case_id.clone(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if predictions.is_empty() {
        return Err(Error::DegenerateLabel("every fold has a single-class training set".into()));
    }
    let p: Vec<bool> = predictions.iter().map(|c| c.predicted_high).collect();
    let t: Vec<bool> = predictions.iter().map(|c| c.truth_high).collect();
    let metrics = confusion_metrics(&p, &t)?;
    let importance = if fold_importance.len() >= 2 && fold_importance[0].len() == data[0].features.len() {
        importance_stability(&fold_importance)?
    } else {
        Vec::new()
    };
    Ok(BinaryReport {
        metrics,
        predictions,
        failed_folds,
        fold_importance,
        importance,
    })
}

/// Forest classifier, one fold per held-out case; each fold's forest draws
/// from its own seed stream.
pub fn loo_forest(data: &[LabeledSignature], config: &LinkConfig) -> Result<BinaryReport> {
    loo_binary(data, |x, y, test, fold| {
        let fc = ForestConfig {
            n_trees: config.n_trees,
            mtry: config.mtry,
            seed: seed::derive(config.seed, fold as u64),
        };
        let model = fit_forest(x, y, &fc)?;
        Ok((model.predict(test), model.importance))
    })
}

/// Penalty with the lowest inner leave-one-out squared error; ties to the
/// earlier candidate.
pub fn select_alpha(x: &[Vec<f64>], y: &[f64], config: &LinkConfig) -> Result<f64> {
    if config.alphas.is_empty() {
        return Err(Error::Config("no LASSO penalties to choose from".into()));
    }
    if config.alphas.len() == 1 || x.len() < 3 {
        return Ok(config.alphas[0]);
    }
    let mut best = (f64::INFINITY, config.alphas[0]);
    for &alpha in &config.alphas {
        let mut sse = 0.0;
        for i in 0..x.len() {
            let m = fit_lasso(&without(x, i), &without(y, i), alpha, config.lasso_max_iter, config.lasso_tol)?;
            sse += (m.predict(&x[i]) - y[i]).powi(2);
        }
        let mse = sse / x.len() as f64;
        if mse < best.0 {
            best = (mse, alpha);
        }
    }
    Ok(best.1)
}

/// LASSO grade regression, one fold per held-out case, with the penalty
/// chosen inside each training fold.
pub fn loo_lasso(data: &[LabeledSignature], config: &LinkConfig) -> Result<LassoReport> {
    check_data(data)?;
    let x: Vec<Vec<f64>> = data.iter().map(|d| d.features.clone()).collect();
    let y: Vec<f64> = data.iter().map(|d| d.grade as f64).collect();
    let predictions = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (xt, yt) = (without(&x, i), without(&y, i));
            let alpha = select_alpha(&xt, &yt, config)?;
            let m = fit_lasso(&xt, &yt, alpha, config.lasso_max_iter, config.lasso_tol)?;
            Ok(GradePrediction {
                case_id: data[i].case_id.clone(),
                true_grade: data[i].grade,
                predicted: m.predict(&x[i]),
                alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pred: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
    let spearman = spearman(&y, &pred);
    Ok(LassoReport { predictions, spearman })
}

pub fn loo_cv(data: &[LabeledSignature], task: Task, config: &LinkConfig) -> Result<LooReport> {
    match task {
        Task::BinaryForest => loo_forest(data, config).map(LooReport::Forest),
        Task::GradeLasso => loo_lasso(data, config).map(LooReport::Lasso),
    }
}
