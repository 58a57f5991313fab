//! Browser demo. Every operation returns a JSON document that the static
//! page in `www/` draws onto a canvas; the plain-Rust functions here are the
//! ones the wasm exports wrap, so they can be tested natively.

use bankwatch_core::resample::{balance, SmoteConfig};
use bankwatch_core::synth::{generate, generate_reports, Recipe};
use bankwatch_core::trend::probability_series;
use bankwatch_core::{Classifier, Dataset, FeatureSchema, FittedModel, Label, ModelKind, ModelSpec, Quarter};
use serde_json::{json, Map, Value};
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn points(d: &Dataset) -> Vec<Value> {
    d.records()
        .iter()
        .map(|r| json!({ "x": r.values[0], "y": r.values[1], "bankrupt": r.label == Label::Bankrupt }))
        .collect()
}

fn planar(recipe: &str, n_active: usize, n_bankrupt: usize, seed: u64) -> Result<Dataset> {
    let recipe: Recipe = recipe.parse().map_err(err)?;
    if matches!(recipe, Recipe::XorMixed) {
        return Err("xor-mixed needs at least three features; pick a planar recipe".into());
    }
    generate(recipe, &FeatureSchema::generic(2), n_active, n_bankrupt, seed).map_err(err)
}

/// Original and SMOTE-synthesised records of a 2-D dataset.
pub fn smote_scatter(recipe: &str, n_active: usize, n_bankrupt: usize, k: usize, ratio: f64, seed: u64) -> Result<Value> {
    let d = planar(recipe, n_active, n_bankrupt, seed)?;
    let out = balance(&d, &SmoteConfig { k, target_ratio: ratio, seed }).map_err(err)?;
    let synthetic = out.dataset.subset(&(d.n()..out.dataset.n()).collect::<Vec<_>>());
    Ok(json!({
        "original": points(&d),
        "synthetic": points(&synthetic),
        "counts_before": d.class_counts(),
        "counts_after": out.dataset.class_counts(),
        "minority": out.minority.map(|l| l.to_string()),
    }))
}

fn fit_with(kind: ModelKind, params: &str, d: &Dataset, seed: u64) -> Result<FittedModel> {
    let mut spec = ModelSpec::default_for(kind, d.m(), seed);
    if !params.trim().is_empty() {
        let overrides: Map<String, Value> = serde_json::from_str(params).map_err(|e| format!("hyperparameters: {e}"))?;
        for (name, value) in &overrides {
            spec.set(name, value, d.m()).map_err(err)?;
        }
    }
    spec.fit(d).map_err(err)
}

fn hit_rate(model: &FittedModel, d: &Dataset) -> Result<f64> {
    let mut hits = 0;
    for r in d.records() {
        hits += usize::from(model.predict(&r.values).map_err(err)? == r.label);
    }
    Ok(hits as f64 / d.n() as f64)
}

/// Bankruptcy probability over a `resolution × resolution` grid covering the
/// SMOTE-balanced training data. `params` is a JSON object of hyperparameter
/// overrides (e.g. `{"kernel": "rbf", "C": 10}`); empty keeps the defaults.
/// Cells are row-major with `y` increasing.
pub fn decision_surface(recipe: &str, model: &str, params: &str, seed: u64, resolution: usize) -> Result<Value> {
    if !(2..=200).contains(&resolution) {
        return Err(format!("resolution {resolution} outside 2..=200"));
    }
    let kind: ModelKind = model.parse().map_err(err)?;
    let raw = planar(recipe, 44, 21, seed)?;
    let d = balance(&raw, &SmoteConfig { seed, ..Default::default() }).map_err(err)?.dataset;
    let fitted = fit_with(kind, params, &d, seed)?;

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in d.records() {
        for j in 0..2 {
            lo[j] = lo[j].min(r.values[j]);
            hi[j] = hi[j].max(r.values[j]);
        }
    }
    for j in 0..2 {
        let pad = 0.1 * (hi[j] - lo[j]).max(1e-9);
        lo[j] -= pad;
        hi[j] += pad;
    }
    let step = |j: usize, i: usize| lo[j] + (hi[j] - lo[j]) * i as f64 / (resolution - 1) as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        for col in 0..resolution {
            cells.push(fitted.predict_proba(&[step(0, col), step(1, row)]).map_err(err)?);
        }
    }
    Ok(json!({
        "model": kind.display_name(),
        "bounds": { "x": [lo[0], hi[0]], "y": [lo[1], hi[1]] },
        "resolution": resolution,
        "probabilities": cells,
        "points": points(&d),
        "training_accuracy": hit_rate(&fitted, &d)?,
    }))
}

/// Quarterly bankruptcy probabilities of synthetic failing rural banks under
/// all three model families, with each model's first warning at `threshold`.
pub fn early_warning(banks: usize, quarters: usize, threshold: f64, seed: u64) -> Result<Value> {
    let schema = FeatureSchema::rural();
    let recipe = Recipe::Gaussian { separation: 2.0 };
    let raw = generate(recipe, &schema, 44, 21, seed).map_err(err)?;
    let train = balance(&raw, &SmoteConfig { seed, ..Default::default() }).map_err(err)?.dataset;
    let models = ModelKind::ALL
        .iter()
        .map(|&kind| Ok((kind.display_name().to_string(), fit_with(kind, "", &train, seed)?)))
        .collect::<Result<Vec<_>>>()?;

    let start: Quarter = "2016-Q1".parse().map_err(err)?;
    let reports = generate_reports(recipe, &schema, banks, quarters, start, seed ^ 0x5eed).map_err(err)?;
    let mut out = Vec::new();
    for bank in reports.records().chunks(quarters) {
        let series: Vec<(Quarter, Vec<f64>)> = bank.iter().map(|r| (r.period.expect("synthetic reports are dated"), r.values.clone())).collect();
        let s = probability_series(&bank[0].bank_id, &models, &series, threshold).map_err(err)?;
        let mut by_model = Map::new();
        for name in &s.models {
            by_model.insert(
                name.clone(),
                json!({
                    "values": s.values(name).map_err(err)?,
                    "first_warning": s.first_warning(name).map_err(err)?.map(|q| q.to_string()),
                }),
            );
        }
        out.push(json!({
            "bank_id": s.bank_id,
            "periods": s.points.iter().map(|p| p.period.to_string()).collect::<Vec<_>>(),
            "models": by_model,
        }));
    }
    Ok(json!({ "threshold": threshold, "banks": out }))
}

fn to_js(result: Result<Value>) -> std::result::Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = smoteScatter)]
pub fn smote_scatter_js(recipe: &str, n_active: usize, n_bankrupt: usize, k: usize, ratio: f64, seed: u32) -> std::result::Result<String, JsError> {
    to_js(smote_scatter(recipe, n_active, n_bankrupt, k, ratio, seed.into()))
}

#[wasm_bindgen(js_name = decisionSurface)]
pub fn decision_surface_js(recipe: &str, model: &str, params: &str, seed: u32, resolution: usize) -> std::result::Result<String, JsError> {
    to_js(decision_surface(recipe, model, params, seed.into(), resolution))
}

#[wasm_bindgen(js_name = earlyWarning)]
pub fn early_warning_js(banks: usize, quarters: usize, threshold: f64, seed: u32) -> std::result::Result<String, JsError> {
    to_js(early_warning(banks, quarters, threshold, seed.into()))
}
