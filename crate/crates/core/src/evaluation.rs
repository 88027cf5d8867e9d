//! Top-k accuracy, per-class reports, confusion analysis and side-by-side
//! model comparison.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::{LabeledImage, TensorDataset};
use crate::error::{Error, Result};
use crate::models::{count_parameters, Mode, ModelGraph};
use crate::tensor::Tensor;

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Whether `label` ranks within the top `k` of `row`. A class outranks the
/// label if its score is strictly greater, or equal with a lower index.
fn in_top_k(row: &[f64], label: usize, k: usize) -> bool {
    let target = row[label];
    let ahead = row
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v > target || (v == target && i < label))
        .count();
    ahead < k
}

fn check_scores(scores: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let (n, c) = scores.dims2()?;
    if n != labels.len() {
        return Err(Error::ShapeMismatch(format!("{n} score rows but {} labels", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    Ok((n, c))
}

/// Fraction of rows whose true label is among the `k` highest scores.
pub fn top_k_accuracy(scores: &Tensor, labels: &[usize], k: usize) -> Result<f64> {
    let (n, c) = check_scores(scores, labels)?;
    if k == 0 || k > c {
        return Err(Error::KOutOfRange { k, classes: c });
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let hits = scores
        .data()
        .chunks(c)
        .zip(labels)
        .filter(|(row, &l)| in_top_k(row, l, k))
        .count();
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub top1: f64,
    /// Top-`min(5, C)` accuracy.
    pub top5: f64,
    /// `None` for classes absent from the evaluated split.
    pub per_class_top1: Vec<Option<f64>>,
    /// `confusion[true][predicted]` over top-1 predictions.
    pub confusion: Vec<Vec<usize>>,
    pub sample_count: usize,
    /// Top-1 prediction for each sample, in split order.
    pub predictions: Vec<usize>,
}

impl EvalReport {
    /// Builds a report from an `N×C` score matrix.
    pub fn from_scores(model: impl Into<String>, scores: &Tensor, labels: &[usize]) -> Result<Self> {
        let (n, c) = check_scores(scores, labels)?;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let top1 = top_k_accuracy(scores, labels, 1)?;
        let top5 = top_k_accuracy(scores, labels, c.min(5))?;
        let predictions: Vec<usize> = scores.data().chunks(c).map(argmax).collect();
        let mut confusion = vec![vec![0; c]; c];
        for (&t, &p) in labels.iter().zip(&predictions) {
            confusion[t][p] += 1;
        }
        let per_class_top1 = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let total: usize = row.iter().sum();
                (total > 0).then(|| row[k] as f64 / total as f64)
            })
            .collect();
        Ok(Self {
            model: model.into(),
            top1,
            top5,
            per_class_top1,
            confusion,
            sample_count: n,
            predictions,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    /// `{model, samples, top1, top5, per_class, confused}` with every
    /// off-diagonal confusion entry listed as `[true, pred, count]`.
    pub fn to_json(&self) -> serde_json::Value {
        let confused: Vec<[usize; 3]> = most_confused_pairs(self, usize::MAX)
            .into_iter()
            .map(|p| [p.true_class, p.predicted_class, p.count])
            .collect();
        json!({
            "model": self.model,
            "samples": self.sample_count,
            "top1": self.top1,
            "top5": self.top5,
            "per_class": self.per_class_top1,
            "confused": confused,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusedPair {
    pub true_class: usize,
    pub predicted_class: usize,
    pub count: usize,
}

/// Non-zero off-diagonal confusion entries, most frequent first, ties by
/// `(true, predicted)`.
pub fn most_confused_pairs(report: &EvalReport, limit: usize) -> Vec<ConfusedPair> {
    let mut pairs: Vec<ConfusedPair> = report
        .confusion
        .iter()
        .enumerate()
        .flat_map(|(t, row)| {
            row.iter().enumerate().filter(move |&(p, &n)| p != t && n > 0).map(move |(p, &n)| {
                ConfusedPair {
                    true_class: t,
                    predicted_class: p,
                    count: n,
                }
            })
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.true_class.cmp(&b.true_class))
            .then(a.predicted_class.cmp(&b.predicted_class))
    });
    pairs.truncate(limit);
    pairs
}

fn model_name(model: &ModelGraph) -> String {
    model.architecture().map_or("custom", |a| a.name()).to_string()
}

/// Inference-mode scores for every sample, batch by batch.
pub fn predict_scores(model: &ModelGraph, data: &TensorDataset, batch_size: usize) -> Result<Tensor> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let batches = data
        .batch_indices(batch_size.max(1))
        .iter()
        .map(|idx| {
            let (x, _) = data.batch(idx)?;
            model.forward(&x, Mode::Inference, 0)
        })
        .collect::<Result<Vec<_>>>()?;
    let c = model.num_classes();
    let data: Vec<f64> = batches.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(vec![data.len() / c, c], data)
}

/// Evaluates `model` on a preprocessed split. The report does not depend on
/// `batch_size`.
pub fn evaluate(model: &ModelGraph, data: &TensorDataset, batch_size: usize) -> Result<EvalReport> {
    if data.num_classes() != model.num_classes() {
        return Err(Error::ClassSetMismatch(format!(
            "{}-class model on a {}-class split",
            model.num_classes(),
            data.num_classes()
        )));
    }
    let scores = predict_scores(model, data, batch_size)?;
    EvalReport::from_scores(model_name(model), &scores, data.labels())
}

/// Preprocesses `items` to the model's input size and evaluates.
pub fn evaluate_items(model: &ModelGraph, items: &[&LabeledImage], batch_size: usize) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let [_, h, w] = model.input_shape();
    if h != w {
        return Err(Error::BadShape(format!("model input {h}x{w} is not square")));
    }
    let data = TensorDataset::from_items(items, h, model.num_classes())?;
    evaluate(model, &data, batch_size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub report_a: EvalReport,
    pub report_b: EvalReport,
    pub parameters_a: usize,
    pub parameters_b: usize,
    /// `b − a`.
    pub top1_delta: f64,
    pub top5_delta: f64,
    /// Per-class `b − a`; `None` where the class has no samples.
    pub per_class_delta: Vec<Option<f64>>,
    /// Classes with at least one sample B gets right and A misses.
    pub fixed_by_b: Vec<usize>,
    /// Classes with at least one sample A gets right and B misses.
    pub fixed_by_a: Vec<usize>,
}

fn fixed_classes(winner: &[usize], loser: &[usize], labels: &[usize]) -> Vec<usize> {
    let mut classes: Vec<usize> = labels
        .iter()
        .zip(winner.iter().zip(loser))
        .filter(|(&l, (&w, &x))| w == l && x != l)
        .map(|(&l, _)| l)
        .collect();
    classes.sort_unstable();
    classes.dedup();
    classes
}

/// Evaluates both models on the same split and reports their differences.
pub fn compare_models(
    model_a: &ModelGraph,
    model_b: &ModelGraph,
    data: &TensorDataset,
    batch_size: usize,
) -> Result<ComparisonReport> {
    if model_a.num_classes() != model_b.num_classes() {
        return Err(Error::ClassSetMismatch(format!(
            "{} classes vs {} classes",
            model_a.num_classes(),
            model_b.num_classes()
        )));
    }
    let report_a = evaluate(model_a, data, batch_size)?;
    let report_b = evaluate(model_b, data, batch_size)?;
    Ok(compare_reports(report_a, report_b, count_parameters(model_a), count_parameters(model_b), data.labels()))
}

pub(crate) fn compare_reports(
    report_a: EvalReport,
    report_b: EvalReport,
    parameters_a: usize,
    parameters_b: usize,
    labels: &[usize],
) -> ComparisonReport {
    let per_class_delta = report_a
        .per_class_top1
        .iter()
        .zip(&report_b.per_class_top1)
        .map(|(a, b)| Some(b.as_ref()? - a.as_ref()?))
        .collect();
    ComparisonReport {
        top1_delta: report_b.top1 - report_a.top1,
        top5_delta: report_b.top5 - report_a.top5,
        per_class_delta,
        fixed_by_b: fixed_classes(&report_b.predictions, &report_a.predictions, labels),
        fixed_by_a: fixed_classes(&report_a.predictions, &report_b.predictions, labels),
        parameters_a,
        parameters_b,
        report_a,
        report_b,
    }
}
