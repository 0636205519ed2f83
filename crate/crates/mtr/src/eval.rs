//! Relative-error evaluation (RRMSE / aRRMSE), holdout and cross-validation
//! protocols, and pairwise target-correlation analysis.
//!
//! RRMSE divides a model's RMSE on one target by the RMSE of predicting that
//! target's training mean; aRRMSE is the unweighted mean across targets.
//! Cross-validation computes aRRMSE per fold with fold-train means and then
//! averages the fold values.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{make_kfold, Dataset};
use crate::error::{Error, Result};
use crate::rlc::{MultiTargetLearner, MultiTargetModel};
use crate::util::{derive_seed, mean};

/// What to do when a test target's denominator is zero (every test value
/// equals the training mean).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneratePolicy {
    /// Fail the evaluation (default).
    Error,
    /// Drop the target from the average and record a warning.
    SkipWithWarning,
}

/// Evaluation protocol descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Protocol {
    Holdout,
    Cv { folds: usize, seed: u64 },
}

/// Per-fold scores for cross-validation.
#[derive(Debug, Clone, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    /// RRMSE per target; `None` when the target was skipped as degenerate.
    pub per_target_rrmse: Vec<Option<f64>>,
    pub arrmse: f64,
    /// Training-target means used as the baseline in this fold.
    pub train_means: Vec<f64>,
}

/// Result of one evaluation run.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub protocol: Protocol,
    /// Holdout: RRMSE per target. CV: per-target mean over the folds where
    /// the target was not skipped.
    pub per_target_rrmse: Vec<Option<f64>>,
    /// Holdout: mean of per-target RRMSE. CV: mean of per-fold aRRMSE.
    pub arrmse: f64,
    /// One entry per fold for CV; empty for holdout.
    pub per_fold: Vec<FoldReport>,
    /// Holdout: the training means used as baselines. CV: full-data means
    /// (for reference; the per-fold means actually used are in `per_fold`).
    pub train_means: Vec<f64>,
    pub warnings: Vec<String>,
}

/// RRMSE of one target: sqrt(SSE of the model / SSE of the train-mean
/// baseline) over the test values.
pub fn rrmse(pred: &[f64], actual: &[f64], train_mean: f64) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "prediction has {} values, actual has {}",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Dimension("cannot score an empty test set".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, a) in pred.iter().zip(actual.iter()) {
        num += (p - a) * (p - a);
        den += (train_mean - a) * (train_mean - a);
    }
    if den == 0.0 {
        return Err(Error::DegenerateRrmse);
    }
    Ok((num / den).sqrt())
}

/// aRRMSE across targets, with per-target detail and degenerate-target
/// handling.
#[derive(Debug, Clone)]
pub struct ArrmseReport {
    pub arrmse: f64,
    pub per_target: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// Unweighted mean of per-target RRMSE. Degenerate targets either fail the
/// call or are skipped with a warning, per `policy`.
pub fn arrmse(
    preds: &Array2<f64>,
    actuals: &Array2<f64>,
    train_means: &[f64],
    policy: DegeneratePolicy,
) -> Result<ArrmseReport> {
    if preds.dim() != actuals.dim() {
        return Err(Error::Dimension(format!(
            "prediction matrix is {:?}, actual matrix is {:?}",
            preds.dim(),
            actuals.dim()
        )));
    }
    let q = actuals.ncols();
    if train_means.len() != q {
        return Err(Error::Dimension(format!(
            "{} train means supplied for {q} targets",
            train_means.len()
        )));
    }
    let mut per_target = Vec::with_capacity(q);
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    for (j, &train_mean) in train_means.iter().enumerate() {
        let pred: Vec<f64> = preds.column(j).to_vec();
        let actual: Vec<f64> = actuals.column(j).to_vec();
        match rrmse(&pred, &actual, train_mean) {
            Ok(v) => {
                kept.push(v);
                per_target.push(Some(v));
            }
            Err(Error::DegenerateRrmse) => match policy {
                DegeneratePolicy::Error => return Err(Error::DegenerateTarget { target: j }),
                DegeneratePolicy::SkipWithWarning => {
                    warnings.push(format!(
                        "target {j} is degenerate on this test set (all values equal the training mean); excluded from the average"
                    ));
                    per_target.push(None);
                }
            },
            Err(other) => return Err(other),
        }
    }
    if kept.is_empty() {
        return Err(Error::Stats(
            "every target is degenerate on this test set; no average can be formed".into(),
        ));
    }
    Ok(ArrmseReport {
        arrmse: mean(&kept),
        per_target,
        warnings,
    })
}

/// Predicts every row of `x`, assembling an m×q matrix in row order.
pub fn predict_matrix(model: &dyn MultiTargetModel, x: &Array2<f64>) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| model.predict_row(x.row(i)))
        .collect::<Result<_>>()?;
    let q = model.q();
    Ok(Array2::from_shape_fn((x.nrows(), q), |(i, j)| rows[i][j]))
}

fn column_means(y: &Array2<f64>) -> Vec<f64> {
    (0..y.ncols())
        .map(|j| {
            let col: Vec<f64> = y.column(j).to_vec();
            mean(&col)
        })
        .collect()
}

/// Trains on `train`, scores on `test` with train-target means as baselines.
pub fn evaluate_holdout(
    method: &dyn MultiTargetLearner,
    train: &Dataset,
    test: &Dataset,
    policy: DegeneratePolicy,
) -> Result<EvalReport> {
    if train.p() != test.p() || train.q() != test.q() {
        return Err(Error::Dimension(format!(
            "train is {}x{} (inputs x targets), test is {}x{}",
            train.p(),
            train.q(),
            test.p(),
            test.q()
        )));
    }
    let model = method.fit(train)?;
    let preds = predict_matrix(model.as_ref(), &test.x)?;
    let train_means = column_means(&train.y);
    let scores = arrmse(&preds, &test.y, &train_means, policy)?;
    Ok(EvalReport {
        method: method.name(),
        protocol: Protocol::Holdout,
        per_target_rrmse: scores.per_target,
        arrmse: scores.arrmse,
        per_fold: Vec::new(),
        train_means,
        warnings: scores.warnings,
    })
}

/// K-fold cross-validation: each fold trains with a seed derived from the
/// learner's master seed and the fold index, scores with fold-train means,
/// and the fold aRRMSE values are averaged. Folds run in parallel; the
/// report is assembled in fold order.
pub fn evaluate_cv(
    method: &dyn MultiTargetLearner,
    data: &Dataset,
    folds: usize,
    seed: u64,
    policy: DegeneratePolicy,
) -> Result<EvalReport> {
    let plan = make_kfold(data.m(), folds, seed)?;
    let splits = plan.splits();

    let fold_results: Vec<(FoldReport, Vec<String>)> = splits
        .par_iter()
        .enumerate()
        .map(|(f, (train_rows, test_rows))| {
            let train = data.subset(train_rows);
            let test = data.subset(test_rows);
            let model = method.fit_seeded(&train, derive_seed(method.seed(), f as u64))?;
            let preds = predict_matrix(model.as_ref(), &test.x)?;
            let train_means = column_means(&train.y);
            let scores = arrmse(&preds, &test.y, &train_means, policy)?;
            let warnings: Vec<String> = scores
                .warnings
                .into_iter()
                .map(|w| format!("fold {f}: {w}"))
                .collect();
            Ok((
                FoldReport {
                    fold: f,
                    per_target_rrmse: scores.per_target,
                    arrmse: scores.arrmse,
                    train_means,
                },
                warnings,
            ))
        })
        .collect::<Result<_>>()?;

    let mut per_fold = Vec::with_capacity(folds);
    let mut warnings = Vec::new();
    for (report, w) in fold_results {
        per_fold.push(report);
        warnings.extend(w);
    }
    let fold_scores: Vec<f64> = per_fold.iter().map(|f| f.arrmse).collect();
    let q = data.q();
    let per_target_rrmse: Vec<Option<f64>> = (0..q)
        .map(|j| {
            let values: Vec<f64> = per_fold
                .iter()
                .filter_map(|f| f.per_target_rrmse[j])
                .collect();
            if values.is_empty() {
                None
            } else {
                Some(mean(&values))
            }
        })
        .collect();

    Ok(EvalReport {
        method: method.name(),
        protocol: Protocol::Cv { folds, seed },
        per_target_rrmse,
        arrmse: mean(&fold_scores),
        per_fold,
        train_means: column_means(&data.y),
        warnings,
    })
}

/// Pearson correlation between every pair of target columns. Constant
/// columns correlate 0 with everything (with a warning); the diagonal is 1.
pub fn pairwise_target_correlations(y: &Array2<f64>) -> Result<(Array2<f64>, Vec<String>)> {
    let (m, q) = y.dim();
    if q < 2 {
        return Err(Error::Dimension(format!(
            "correlation analysis needs at least 2 targets, got {q}"
        )));
    }
    if m < 2 {
        return Err(Error::Dimension(format!(
            "correlation analysis needs at least 2 rows, got {m}"
        )));
    }
    let means = column_means(y);
    let centered: Vec<Vec<f64>> = (0..q)
        .map(|j| y.column(j).iter().map(|v| v - means[j]).collect())
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut warnings = Vec::new();
    for (j, &n) in norms.iter().enumerate() {
        if n == 0.0 {
            warnings.push(format!(
                "target {j} is constant; its correlations are reported as 0"
            ));
        }
    }
    let mut matrix = Array2::from_elem((q, q), 0.0);
    for a in 0..q {
        matrix[[a, a]] = 1.0;
        for b in (a + 1)..q {
            let value = if norms[a] == 0.0 || norms[b] == 0.0 {
                0.0
            } else {
                let dot: f64 = centered[a]
                    .iter()
                    .zip(centered[b].iter())
                    .map(|(u, v)| u * v)
                    .sum();
                (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0)
            };
            matrix[[a, b]] = value;
            matrix[[b, a]] = value;
        }
    }
    Ok((matrix, warnings))
}

/// Median and standard deviation of the absolute upper-triangle correlations.
#[derive(Debug, Clone)]
pub struct CorrelationSummary {
    pub pairwise: Array2<f64>,
    pub median_abs: f64,
    /// Sample standard deviation; absent when there is only one pair (q = 2).
    pub stdev_abs: Option<f64>,
}

/// Off-diagonal upper-triangle entries in row-major order.
pub fn upper_triangle_values(matrix: &Array2<f64>) -> Vec<f64> {
    let q = matrix.nrows();
    let mut values = Vec::with_capacity(q * (q - 1) / 2);
    for a in 0..q {
        for b in (a + 1)..q {
            values.push(matrix[[a, b]]);
        }
    }
    values
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Summarizes a correlation matrix produced by
/// [`pairwise_target_correlations`].
pub fn correlation_summary(matrix: &Array2<f64>) -> Result<CorrelationSummary> {
    let (rows, cols) = matrix.dim();
    if rows != cols || rows < 2 {
        return Err(Error::Dimension(format!(
            "correlation matrix must be square with q >= 2, got {rows}x{cols}"
        )));
    }
    for a in 0..rows {
        if (matrix[[a, a]] - 1.0).abs() > 1e-9 {
            return Err(Error::Stats(format!(
                "correlation matrix diagonal entry {a} is {}, expected 1",
                matrix[[a, a]]
            )));
        }
        for b in 0..rows {
            let v = matrix[[a, b]];
            if !v.is_finite() || v.abs() > 1.0 + 1e-9 {
                return Err(Error::Stats(format!(
                    "correlation entry ({a}, {b}) is {v}, outside [-1, 1]"
                )));
            }
            if (v - matrix[[b, a]]).abs() > 1e-9 {
                return Err(Error::Stats("correlation matrix is not symmetric".into()));
            }
        }
    }
    let mut abs_values: Vec<f64> = upper_triangle_values(matrix)
        .into_iter()
        .map(f64::abs)
        .collect();
    let median_abs = median(&mut abs_values);
    let stdev_abs = if abs_values.len() < 2 {
        None
    } else {
        let m = mean(&abs_values);
        let var: f64 =
            abs_values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (abs_values.len() - 1) as f64;
        Some(var.sqrt())
    };
    Ok(CorrelationSummary {
        pairwise: matrix.clone(),
        median_abs,
        stdev_abs,
    })
}

/// Renders an [`EvalReport`] as pretty JSON.
pub fn report_to_json(report: &EvalReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Renders an [`EvalReport`] as a flat CSV of (metric, index, value) rows.
pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = String::from("metric,index,value\n");
    out.push_str(&format!("arrmse,,{}\n", report.arrmse));
    for (j, v) in report.per_target_rrmse.iter().enumerate() {
        match v {
            Some(v) => out.push_str(&format!("target_rrmse,{j},{v}\n")),
            None => out.push_str(&format!("target_rrmse,{j},\n")),
        }
    }
    for fold in &report.per_fold {
        out.push_str(&format!("fold_arrmse,{},{}\n", fold.fold, fold.arrmse));
    }
    for (j, m) in report.train_means.iter().enumerate() {
        out.push_str(&format!("train_mean,{j},{m}\n"));
    }
    out
}

/// Renders a correlation matrix as plain CSV (q rows of q values).
pub fn correlation_matrix_to_csv(matrix: &Array2<f64>) -> String {
    let mut out = String::new();
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols())
            .map(|j| format!("{}", matrix[[i, j]]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
