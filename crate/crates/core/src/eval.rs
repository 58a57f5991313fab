//! Confusion matrices, accuracy, k-fold cross-validation and grid search.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataset::{read_to_string, Dataset, Label};
use crate::error::{Error, Result};
use crate::model::{Classifier, FittedModel, ModelKind, ModelSpec};
use crate::seeded_rng;

/// Bankrupt is the positive class. Rows are actual, columns predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fn_: usize, fp: usize, tn: usize) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Bankrupt, Label::Bankrupt) => self.tp += 1,
            (Label::Bankrupt, Label::Active) => self.fn_ += 1,
            (Label::Active, Label::Bankrupt) => self.fp += 1,
            (Label::Active, Label::Active) => self.tn += 1,
        }
    }

    /// Text table with actual classes as rows and predicted classes as columns.
    pub fn render(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}");
        let _ = writeln!(s, "{:<24}{:^22}", "", "Predicted Class");
        let _ = writeln!(s, "{:<24}{:>11}{:>11}", "", "Bankrupt", "Active");
        let _ = writeln!(s, "{:<14}{:<10}{:>11}{:>11}", "Actual Class", "Bankrupt", self.tp, self.fn_);
        let _ = writeln!(s, "{:<14}{:<10}{:>11}{:>11}", "", "Active", self.fp, self.tn);
        s
    }
}

pub fn confusion(actual: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(Error::Dimension {
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData("confusion matrix of zero predictions".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&a, &p) in actual.iter().zip(predicted) {
        cm.record(a, p);
    }
    Ok(cm)
}

/// Same as [`confusion`] for raw `0/1` codes; any other code is an error.
pub fn confusion_codes(actual: &[u8], predicted: &[u8]) -> Result<ConfusionMatrix> {
    let conv = |v: &[u8]| -> Result<Vec<Label>> {
        v.iter()
            .map(|&c| Label::from_u8(c).ok_or_else(|| Error::InvalidParameter(format!("non-binary label {c}"))))
            .collect()
    };
    confusion(&conv(actual)?, &conv(predicted)?)
}

/// `(TP + TN) / (TP + FN + FP + TN)`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InsufficientData("accuracy of an empty confusion matrix".into()));
    }
    Ok((cm.tp + cm.tn) as f64 / total as f64)
}

/// `"90.91%"`.
pub fn format_percent(acc: f64) -> String {
    format!("{:.2}%", acc * 100.0)
}

pub fn evaluate<C: Classifier + ?Sized>(model: &C, d: &Dataset) -> Result<ConfusionMatrix> {
    let predicted = d
        .records()
        .iter()
        .map(|r| model.predict(&r.values))
        .collect::<Result<Vec<_>>>()?;
    confusion(&d.labels(), &predicted)
}

/// Seeded shuffle of `0..n` cut into `k` contiguous folds; the first
/// `n mod k` folds get one extra index.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} records cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// `None` for folds skipped because the training complement had one class.
    pub fold_scores: Vec<Option<f64>>,
    pub mean: f64,
    pub warnings: Vec<String>,
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut held = vec![false; n];
    for &i in fold {
        held[i] = true;
    }
    (0..n).filter(|&i| !held[i]).collect()
}

/// Cross-validates over precomputed folds.
pub fn cross_validate_folds<F, C>(d: &Dataset, folds: &[Vec<usize>], fit: F) -> Result<CvResult>
where
    F: Fn(&Dataset) -> Result<C>,
    C: Classifier,
{
    let mut fold_scores = Vec::with_capacity(folds.len());
    let mut warnings = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        let train = d.subset(&complement(d.n(), fold));
        if !train.has_both_classes() {
            warnings.push(format!("fold {} skipped: training complement has a single class", f + 1));
            fold_scores.push(None);
            continue;
        }
        let model = fit(&train)?;
        let cm = evaluate(&model, &d.subset(fold))?;
        fold_scores.push(Some(accuracy(&cm)?));
    }
    let scored: Vec<f64> = fold_scores.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::InsufficientData("every fold was skipped".into()));
    }
    Ok(CvResult {
        mean: scored.iter().sum::<f64>() / scored.len() as f64,
        fold_scores,
        warnings,
    })
}

pub fn cross_validate<F, C>(d: &Dataset, fit: F, k: usize, seed: u64) -> Result<CvResult>
where
    F: Fn(&Dataset) -> Result<C>,
    C: Classifier,
{
    let folds = kfold_indices(d.n(), k, seed)?;
    cross_validate_folds(d, &folds, fit)
}

pub type Assignment = Vec<(String, Value)>;

/// Hyperparameter grid: ordered axes, each a list of JSON values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub model: ModelKind,
    pub axes: Vec<(String, Vec<Value>)>,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    model: ModelKind,
    axes: Map<String, Value>,
    #[serde(default = "default_folds")]
    folds: usize,
    #[serde(default)]
    seed: u64,
}

fn default_folds() -> usize {
    5
}

impl Serialize for GridSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GridFile {
            model: self.model,
            axes: self
                .axes
                .iter()
                .map(|(k, v)| (k.clone(), Value::Array(v.clone())))
                .collect(),
            folds: self.folds,
            seed: self.seed,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = GridFile::deserialize(deserializer)?;
        let mut axes = Vec::new();
        for (name, values) in file.axes {
            match values {
                Value::Array(v) => axes.push((name, v)),
                other => axes.push((name, vec![other])),
            }
        }
        let spec = GridSpec {
            model: file.model,
            axes,
            folds: file.folds,
            seed: file.seed,
        };
        spec.validate().map_err(serde::de::Error::custom)?;
        Ok(spec)
    }
}

impl GridSpec {
    /// Built-in grid for a model family on `m` features.
    pub fn default_for(model: ModelKind, m: usize, seed: u64) -> Self {
        use serde_json::json;
        let axes = match model {
            ModelKind::Logreg => vec![("ridge".to_string(), vec![json!(1e-8), json!(1e-4), json!(1e-2)])],
            ModelKind::Forest => {
                let top = (((m as f64).sqrt().ceil() as usize) + 1).min(m).max(1);
                vec![
                    ("trees".to_string(), vec![json!(50), json!(100), json!(200)]),
                    ("max_features".to_string(), (1..=top).map(|p| json!(p)).collect()),
                ]
            }
            ModelKind::Svm => vec![
                ("C".to_string(), vec![json!(0.1), json!(1.0), json!(10.0), json!(100.0)]),
                ("kernel".to_string(), vec![json!("linear"), json!("rbf")]),
            ],
        };
        GridSpec {
            model,
            axes,
            folds: 5,
            seed,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&read_to_string(path.as_ref())?)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((name, _)) = self.axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::InvalidParameter(format!("grid axis `{name}` is empty")));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!("folds must be >= 2, got {}", self.folds)));
        }
        Ok(())
    }

    pub fn n_combinations(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn combinations(&self) -> Vec<Assignment> {
        combinations(&self.axes)
    }
}

/// Cartesian product in declared order, last axis varying fastest.
pub fn combinations(axes: &[(String, Vec<Value>)]) -> Vec<Assignment> {
    let mut out: Vec<Assignment> = vec![Vec::new()];
    for (name, values) in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut a = prefix.clone();
                    a.push((name.clone(), v.clone()));
                    a
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub index: usize,
    pub params: Assignment,
    pub fold_scores: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOutcome {
    pub axis_names: Vec<String>,
    pub folds: usize,
    pub rows: Vec<GridRow>,
    pub best_index: usize,
    pub best_mean: f64,
}

impl GridOutcome {
    pub fn best(&self) -> &GridRow {
        &self.rows[self.best_index]
    }

    /// One row per combination: hyperparameters, fold scores, mean.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["combination".to_string()];
        header.extend(self.axis_names.iter().cloned());
        header.extend((1..=self.folds).map(|f| format!("fold_{f}")));
        header.push("mean".into());
        header.push("error".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.index.to_string()];
            rec.extend(row.params.iter().map(|(_, v)| value_cell(v)));
            rec.extend(
                row.fold_scores
                    .iter()
                    .map(|s| s.map(|v| v.to_string()).unwrap_or_default()),
            );
            for _ in row.fold_scores.len()..self.folds {
                rec.push(String::new());
            }
            rec.push(row.mean.map(|v| v.to_string()).unwrap_or_default());
            rec.push(row.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

pub fn value_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Evaluates every combination on one shared fold assignment.
///
/// Best is the highest mean accuracy; ties keep the earliest combination.
/// A combination whose fit fails is recorded with its error and excluded.
pub fn run_grid<F, C>(d: &Dataset, axes: &[(String, Vec<Value>)], folds: usize, seed: u64, fit: F) -> Result<GridOutcome>
where
    F: Fn(&Assignment, &Dataset) -> Result<C> + Sync,
    C: Classifier,
{
    let fold_sets = kfold_indices(d.n(), folds, seed)?;
    let combos = combinations(axes);
    let evaluate_one = |(index, params): (usize, &Assignment)| -> GridRow {
        match cross_validate_folds(d, &fold_sets, |train| fit(params, train)) {
            Ok(cv) => GridRow {
                index,
                params: params.clone(),
                fold_scores: cv.fold_scores,
                mean: Some(cv.mean),
                error: None,
                warnings: cv.warnings,
            },
            Err(e) => GridRow {
                index,
                params: params.clone(),
                fold_scores: Vec::new(),
                mean: None,
                error: Some(e.to_string()),
                warnings: Vec::new(),
            },
        }
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<GridRow> = {
        use rayon::prelude::*;
        combos.par_iter().enumerate().map(evaluate_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<GridRow> = combos.iter().enumerate().map(evaluate_one).collect();

    let mut best: Option<(usize, f64)> = None;
    for row in &rows {
        if let Some(mean) = row.mean {
            if best.is_none_or(|(_, b)| mean > b) {
                best = Some((row.index, mean));
            }
        }
    }
    let (best_index, best_mean) = best.ok_or_else(|| {
        Error::InvalidParameter(format!(
            "all {} grid combinations failed: {}",
            rows.len(),
            rows.first().and_then(|r| r.error.clone()).unwrap_or_default()
        ))
    })?;
    Ok(GridOutcome {
        axis_names: axes.iter().map(|(n, _)| n.clone()).collect(),
        folds,
        rows,
        best_index,
        best_mean,
    })
}

/// Resolves an assignment into a full model spec for `kind`.
pub fn spec_from_assignment(kind: ModelKind, params: &Assignment, m: usize, seed: u64) -> Result<ModelSpec> {
    let mut spec = ModelSpec::default_for(kind, m, seed);
    // gamma after kernel so `{kernel: rbf, gamma: g}` combinations compose
    for (name, value) in params.iter().filter(|(n, _)| n != "gamma") {
        spec.set(name, value, m)?;
    }
    for (name, value) in params.iter().filter(|(n, _)| n == "gamma") {
        if let ModelSpec::Svm { config, .. } = &spec {
            if matches!(config.kernel, crate::svm::Kernel::Linear) {
                continue;
            }
        }
        spec.set(name, value, m)?;
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub outcome: GridOutcome,
    pub best_spec: ModelSpec,
}

pub fn grid_search(d: &Dataset, spec: &GridSpec) -> Result<GridSearchResult> {
    spec.validate()?;
    let m = d.m();
    let outcome = run_grid(d, &spec.axes, spec.folds, spec.seed, |params, train| -> Result<FittedModel> {
        spec_from_assignment(spec.model, params, m, spec.seed)?.fit(train)
    })?;
    let best_spec = spec_from_assignment(spec.model, &outcome.best().params, m, spec.seed)?;
    Ok(GridSearchResult { outcome, best_spec })
}
