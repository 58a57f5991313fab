use std::path::Path;

use bankwatch_core::dataset::{clean, split};
use bankwatch_core::eval::{evaluate, format_percent, grid_search, GridSearchResult, GridSpec};
use bankwatch_core::resample::{balance, SmoteConfig};
use bankwatch_core::synth::{generate, generate_reports, Recipe};
use bankwatch_core::trend::{read_reports, series_for_models, write_series_csv};
use bankwatch_core::{accuracy, ConfusionMatrix, Dataset, FeatureSchema, FittedModel, ModelKind, Quarter};
use chrono::NaiveDate;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::exit::{CliError, CliResult, Failure};
use crate::manifest::Run;

fn schema(global: &Global, run: &mut Run) -> CliResult<FeatureSchema> {
    match global.schema.as_deref().unwrap_or("commercial") {
        "commercial" => Ok(FeatureSchema::commercial()),
        "rural" => Ok(FeatureSchema::rural()),
        path => {
            let bytes = run.read(Path::new(path))?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("schema file {path}: {e}")))
        }
    }
}

fn load_dataset(run: &mut Run, path: &Path, schema: &FeatureSchema, global: &Global) -> CliResult<Dataset> {
    let bytes = run.read(path)?;
    Dataset::read_csv(bytes.as_slice(), schema, &global.label_column)
        .map_err(|e| {
            let e = CliError::from(e);
            CliError::new(e.kind, format!("{}: {}", path.display(), e.message))
        })
}

fn load_model(run: &mut Run, path: &Path) -> CliResult<FittedModel> {
    let bytes = run.read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::data(format!("{} is not UTF-8", path.display())))?;
    FittedModel::from_json(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// A model's own schema, checked against `--schema` when given.
fn model_schema(global: &Global, run: &mut Run, model: &FittedModel) -> CliResult<FeatureSchema> {
    let own = FeatureSchema::from_codes(model.schema())?;
    if global.schema.is_some() {
        model.check_schema(&schema(global, run)?.code_list())?;
    }
    Ok(own)
}

fn stratified(global: &Global, schema: &FeatureSchema) -> bool {
    match global.stratify {
        Stratify::On => true,
        Stratify::Off => false,
        Stratify::Auto => !schema.is_rural(),
    }
}

fn csv(d: &Dataset) -> CliResult<Vec<u8>> {
    Ok(d.to_csv_string()?.into_bytes())
}

/// Reasons a fitted model should not be trusted as an optimum.
fn convergence_issues(model: &FittedModel) -> Vec<String> {
    let mut issues = Vec::new();
    match model {
        FittedModel::Logreg(m) if !m.converged() => issues.push(format!(
            "logistic regression stopped after {} iterations with gradient norm {:e}",
            m.diagnostics.iterations, m.diagnostics.final_grad_norm
        )),
        FittedModel::Svm(m) => {
            if !m.diagnostics.converged {
                issues.push(format!(
                    "SVM stopped after {} iterations with KKT gap {:e}",
                    m.diagnostics.iterations, m.diagnostics.kkt_gap
                ));
            }
            if m.platt.is_some_and(|p| !p.converged) {
                issues.push("Platt scaling did not converge".into());
            }
        }
        _ => {}
    }
    issues
}

fn model_warnings(model: &FittedModel) -> Vec<String> {
    match model {
        FittedModel::Logreg(m) => m.diagnostics.warnings.clone(),
        FittedModel::Svm(m) if m.platt.is_none() => vec!["SVM is uncalibrated: decision values were constant".into()],
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, Serialize)]
struct Score {
    n: usize,
    confusion: ConfusionMatrix,
    accuracy: f64,
    accuracy_percent: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    svm_platt_sign_disagreements: Option<usize>,
}

fn score(model: &FittedModel, d: &Dataset) -> CliResult<Score> {
    let cm = evaluate(model, d)?;
    let acc = accuracy(&cm)?;
    let disagreements = match model {
        FittedModel::Svm(m) if m.platt.is_some() => {
            let mut count = 0;
            for r in d.records() {
                count += usize::from(m.assess(&r.values)?.disagree);
            }
            Some(count)
        }
        _ => None,
    };
    Ok(Score {
        n: d.n(),
        confusion: cm,
        accuracy: acc,
        accuracy_percent: format_percent(acc),
        svm_platt_sign_disagreements: disagreements,
    })
}

fn render_scores(kind: ModelKind, training: Option<&Score>, testing: &Score) -> String {
    let mut s = format!("{}\n\n", kind.display_name());
    if let Some(t) = training {
        s += &t.confusion.render("Training data");
        s += &format!("Accuracy: {}\n\n", t.accuracy_percent);
    }
    s += &testing.confusion.render("Testing data");
    s += &format!("Accuracy: {}\n", testing.accuracy_percent);
    s
}

fn convergence_failure(run: &mut Run, issues: Vec<String>) -> CliResult<()> {
    if issues.is_empty() {
        return Ok(());
    }
    let message = issues.join("; ");
    run.warn(message.clone());
    Err(CliError::new(Failure::Convergence, message))
}

pub fn synth(global: &Global, a: &SynthArgs, run: &mut Run) -> CliResult<()> {
    let recipe: Recipe = a.recipe.parse().map_err(CliError::as_config)?;
    let schema = schema(global, run)?;
    run.resolve("schema", schema.code_list());
    let d = generate(recipe, &schema, a.n_active, a.n_bankrupt, global.seed).map_err(CliError::as_config)?;
    run.write("data.csv", &csv(&d)?)?;
    println!("wrote {} records ({} active, {} bankrupt) with recipe {recipe}", d.n(), a.n_active, a.n_bankrupt);
    if a.report_banks > 0 {
        let start: Quarter = a.start.parse().map_err(CliError::as_config)?;
        // reports get their own stream so adding them leaves data.csv unchanged
        let reports = generate_reports(recipe, &schema, a.report_banks, a.quarters, start, global.seed ^ 0x5eed)
            .map_err(CliError::as_config)?;
        run.write("reports.csv", &csv(&reports)?)?;
        println!("wrote {} quarterly reports for {} banks", reports.n(), a.report_banks);
    }
    Ok(())
}

pub fn clean_cmd(global: &Global, a: &InputArgs, run: &mut Run) -> CliResult<()> {
    let schema = schema(global, run)?;
    let d = load_dataset(run, &a.input, &schema, global)?;
    let out = clean(&d);
    if out.emptied {
        run.warn("every record had a missing value; the cleaned dataset is empty");
    }
    run.write("clean.csv", &csv(&out.dataset)?)?;
    run.write_json(
        "clean_report.json",
        &json!({"input_records": d.n(), "removed": out.removed, "kept": out.dataset.n(), "emptied": out.emptied}),
    )?;
    println!("kept {} of {} records ({} removed)", out.dataset.n(), d.n(), out.removed);
    Ok(())
}

pub fn smote(global: &Global, a: &SmoteArgs, run: &mut Run) -> CliResult<()> {
    let schema = schema(global, run)?;
    let d = load_dataset(run, &a.input, &schema, global)?;
    let cfg = SmoteConfig {
        k: a.k,
        target_ratio: a.ratio,
        seed: global.seed,
    };
    run.resolve("smote", json!({"k": cfg.k, "target_ratio": cfg.target_ratio, "seed": cfg.seed}));
    let out = balance(&d, &cfg)?;
    run.write("balanced.csv", &csv(&out.dataset)?)?;
    let [active, bankrupt] = out.dataset.class_counts();
    run.write_json(
        "smote_report.json",
        &json!({"minority": out.minority, "added": out.added, "active": active, "bankrupt": bankrupt}),
    )?;
    println!("added {} synthetic records: {active} active / {bankrupt} bankrupt", out.added);
    Ok(())
}

pub fn split_cmd(global: &Global, a: &SplitArgs, run: &mut Run) -> CliResult<()> {
    let schema = schema(global, run)?;
    let d = load_dataset(run, &a.input, &schema, global)?;
    let strat = stratified(global, &schema);
    run.resolve("stratified", strat);
    let pair = split(&d, a.fraction, global.seed, strat)?;
    run.write("train.csv", &csv(&pair.train)?)?;
    run.write("test.csv", &csv(&pair.test)?)?;
    let [ta, tb] = pair.train.class_counts();
    let [sa, sb] = pair.test.class_counts();
    run.write_json(
        "split_report.json",
        &json!({
            "train_fraction": a.fraction, "stratified": strat,
            "train": {"active": ta, "bankrupt": tb}, "test": {"active": sa, "bankrupt": sb},
        }),
    )?;
    println!("train {ta} active + {tb} bankrupt, test {sa} active + {sb} bankrupt");
    Ok(())
}

pub fn train(global: &Global, a: &TrainArgs, run: &mut Run) -> CliResult<()> {
    let schema = schema(global, run)?;
    let d = load_dataset(run, &a.input, &schema, global)?;
    let spec = a.hyper.resolve(a.model, d.m(), global.seed)?;
    run.resolve("spec", &spec);
    let model = spec.fit(&d)?;
    run.write("model.json", (model.to_json()? + "\n").as_bytes())?;
    let training = score(&model, &d)?;
    let issues = convergence_issues(&model);
    for w in model_warnings(&model) {
        run.warn(w);
    }
    let oob = match &model {
        FittedModel::Forest(f) => f.oob_accuracy,
        _ => None,
    };
    run.write_json(
        "train_report.json",
        &json!({
            "model": a.model, "spec": spec, "training": training, "oob_accuracy": oob,
            "converged": issues.is_empty(), "convergence_issues": issues,
        }),
    )?;
    println!("{} trained on {} records: training accuracy {}", a.model.display_name(), d.n(), training.accuracy_percent);
    convergence_failure(run, issues)
}

pub fn evaluate_cmd(global: &Global, a: &EvaluateArgs, run: &mut Run) -> CliResult<()> {
    let model = load_model(run, &a.model_file)?;
    let schema = model_schema(global, run, &model)?;
    let test = load_dataset(run, &a.input, &schema, global)?;
    let testing = score(&model, &test)?;
    let training = match &a.train {
        Some(p) => Some(score(&model, &load_dataset(run, p, &schema, global)?)?),
        None => None,
    };
    run.write_json(
        "evaluation.json",
        &json!({"model": model.kind(), "training": training, "testing": testing}),
    )?;
    let table = render_scores(model.kind(), training.as_ref(), &testing);
    run.write("evaluation.txt", table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn grid_for(kind: ModelKind, m: usize, seed: u64, folds: usize) -> GridSpec {
    GridSpec {
        folds,
        ..GridSpec::default_for(kind, m, seed)
    }
}

/// Runs the grid, writes its tables, refits the winner on all of `d`.
fn search_and_fit(
    run: &mut Run,
    d: &Dataset,
    spec: &GridSpec,
    model_file: &str,
) -> CliResult<(GridSearchResult, FittedModel)> {
    let kind = spec.model;
    let result = grid_search(d, spec)?;
    run.write(&format!("grid_{kind}.csv"), result.outcome.to_csv_string()?.as_bytes())?;
    let best = result.outcome.best();
    let best_params: serde_json::Map<String, serde_json::Value> = best.params.iter().cloned().collect();
    run.write_json(
        &format!("grid_{kind}.json"),
        &json!({
            "grid": spec, "combinations": result.outcome.rows.len(),
            "best_combination": best.index, "best_params": best_params,
            "best_mean_accuracy": result.outcome.best_mean, "best_spec": result.best_spec,
        }),
    )?;
    for row in &result.outcome.rows {
        if let Some(e) = &row.error {
            run.warn(format!("{kind} combination {} failed: {e}", row.index));
        }
        for w in &row.warnings {
            run.warn(format!("{kind} combination {}: {w}", row.index));
        }
    }
    let model = result.best_spec.fit(d)?;
    run.write(model_file, (model.to_json()? + "\n").as_bytes())?;
    for w in model_warnings(&model) {
        run.warn(format!("{kind}: {w}"));
    }
    Ok((result, model))
}

pub fn gridsearch(global: &Global, a: &GridArgs, run: &mut Run) -> CliResult<()> {
    let schema = schema(global, run)?;
    let d = load_dataset(run, &a.input, &schema, global)?;
    let spec = match &a.grid {
        Some(path) => {
            let bytes = run.read(path)?;
            let spec: GridSpec =
                serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("grid file {}: {e}", path.display())))?;
            if spec.model != a.model {
                return Err(CliError::config(format!("grid file is for {}, --model is {}", spec.model, a.model)));
            }
            spec
        }
        None => grid_for(a.model, d.m(), global.seed, a.folds),
    };
    run.resolve("grid", &spec);
    let (result, model) = search_and_fit(run, &d, &spec, &format!("best_{}.json", a.model))?;
    println!(
        "{} combinations x {} folds; best #{} with mean accuracy {}",
        result.outcome.rows.len(),
        spec.folds,
        result.outcome.best_index,
        format_percent(result.outcome.best_mean)
    );
    convergence_failure(run, convergence_issues(&model))
}

pub fn trend(global: &Global, a: &TrendArgs, run: &mut Run) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(CliError::config(format!("--threshold {} outside [0, 1]", a.threshold)));
    }
    let event = match &a.event_date {
        Some(s) => Some(
            s.parse::<NaiveDate>()
                .map_err(|e| CliError::config(format!("--event-date `{s}`: {e}")))?,
        ),
        None => None,
    };
    let mut models: Vec<(String, FittedModel)> = Vec::new();
    for path in &a.model_files {
        let model = load_model(run, path)?;
        let base = model.kind().name().to_string();
        let taken = models.iter().filter(|(n, _)| n == &base || n.starts_with(&format!("{base}-"))).count();
        let name = if taken == 0 { base } else { format!("{base}-{}", taken + 1) };
        models.push((name, model));
    }
    let schema = model_schema(global, run, &models[0].1)?;
    let bytes = run.read(&a.reports)?;
    let banks = read_reports(bytes.as_slice(), &schema)?;
    if banks.is_empty() {
        return Err(CliError::data(format!("{} has no reports", a.reports.display())));
    }
    let series = banks
        .iter()
        .map(|b| series_for_models(b, &models, &schema, a.threshold))
        .collect::<bankwatch_core::Result<Vec<_>>>()?;
    let mut table = Vec::new();
    write_series_csv(&series, &mut table)?;
    run.write("trend.csv", &table)?;
    let summaries: Vec<_> = series.iter().map(|s| s.summary(event)).collect();
    run.write_json("trend_summary.json", &summaries)?;
    for s in &series {
        let warnings: Vec<String> = s
            .warnings()
            .into_iter()
            .map(|(m, q)| format!("{m}: {}", q.map_or("none".to_string(), |q| q.to_string())))
            .collect();
        println!("{} first warning {}", s.bank_id, warnings.join(", "));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonRow {
    model: ModelKind,
    method: &'static str,
    best_params: serde_json::Map<String, serde_json::Value>,
    cv_mean_accuracy: f64,
    training: Score,
    testing: Score,
}

pub fn pipeline(global: &Global, a: &PipelineArgs, run: &mut Run) -> CliResult<()> {
    let recipe: Recipe = a.recipe.parse().map_err(CliError::as_config)?;
    if a.models.is_empty() {
        return Err(CliError::config("--models is empty"));
    }
    let schema = schema(global, run)?;
    let strat = stratified(global, &schema);
    let smote_cfg = SmoteConfig {
        k: a.k,
        target_ratio: a.ratio,
        seed: global.seed,
    };
    run.resolve("schema", schema.code_list());
    run.resolve("stratified", strat);
    run.resolve("smote", json!({"k": a.k, "target_ratio": a.ratio, "seed": global.seed, "after_split": global.smote_after_split}));

    let data = generate(recipe, &schema, a.n_active, a.n_bankrupt, global.seed).map_err(CliError::as_config)?;
    run.write("data.csv", &csv(&data)?)?;
    let cleaned = clean(&data);
    if cleaned.removed > 0 {
        run.warn(format!("clean removed {} records", cleaned.removed));
    }
    run.write("clean.csv", &csv(&cleaned.dataset)?)?;

    let (train, test) = if global.smote_after_split {
        let pair = split(&cleaned.dataset, a.fraction, global.seed, strat)?;
        (balance(&pair.train, &smote_cfg)?.dataset, pair.test)
    } else {
        let balanced = balance(&cleaned.dataset, &smote_cfg)?.dataset;
        run.write("balanced.csv", &csv(&balanced)?)?;
        let pair = split(&balanced, a.fraction, global.seed, strat)?;
        (pair.train, pair.test)
    };
    run.write("train.csv", &csv(&train)?)?;
    run.write("test.csv", &csv(&test)?)?;

    let mut rows = Vec::new();
    let mut issues = Vec::new();
    for &kind in &a.models {
        let spec = grid_for(kind, train.m(), global.seed, a.folds);
        let (result, model) = search_and_fit(run, &train, &spec, &format!("model_{kind}.json"))?;
        issues.extend(convergence_issues(&model).into_iter().map(|i| format!("{kind}: {i}")));
        let training = score(&model, &train)?;
        let testing = score(&model, &test)?;
        run.write_json(
            &format!("evaluation_{kind}.json"),
            &json!({"model": kind, "training": training, "testing": testing}),
        )?;
        run.write(
            &format!("evaluation_{kind}.txt"),
            render_scores(kind, Some(&training), &testing).as_bytes(),
        )?;
        rows.push(ComparisonRow {
            model: kind,
            method: kind.display_name(),
            best_params: result.outcome.best().params.iter().cloned().collect(),
            cv_mean_accuracy: result.outcome.best_mean,
            training,
            testing,
        });
    }

    let mut table = csv::Writer::from_writer(Vec::new());
    table
        .write_record(["method", "training_accuracy_pct", "testing_accuracy_pct"])
        .map_err(|e| CliError::internal(e.to_string()))?;
    let mut text = format!("{:<28}{:>15}{:>15}\n", "Methods", "Training data", "Testing data");
    for r in &rows {
        let tr = format!("{:.2}", r.training.accuracy * 100.0);
        let te = format!("{:.2}", r.testing.accuracy * 100.0);
        text += &format!("{:<28}{:>15}{:>15}\n", r.method, tr, te);
        table
            .write_record([r.method, tr.as_str(), te.as_str()])
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    let table = table.into_inner().map_err(|e| CliError::internal(e.to_string()))?;
    run.write("comparison.csv", &table)?;
    run.write("comparison.txt", text.as_bytes())?;
    run.write_json("comparison.json", &rows)?;
    print!("{text}");
    convergence_failure(run, issues)
}
