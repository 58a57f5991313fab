use std::path::PathBuf;

use bankwatch_core::model::{ModelKind, ModelSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::exit::{CliError, CliResult};

#[derive(Debug, Clone, Parser)]
#[command(name = "bankwatch", version, about = "Bank bankruptcy prediction from CAMELS ratios")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Global {
    /// Master seed; every stochastic step derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// `commercial`, `rural`, or a JSON schema file. Commands that read a
    /// model take the schema from the model when this is omitted.
    #[arg(long, global = true)]
    pub schema: Option<String>,
    #[arg(long, global = true, default_value = "label")]
    pub label_column: String,
    /// Worker threads for forests and grid points; output does not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Balance only the training split instead of the whole dataset.
    #[arg(long, global = true)]
    pub smote_after_split: bool,
    /// `auto` stratifies unless the schema is the rural one.
    #[arg(long, global = true, value_enum, default_value_t = Stratify::Auto)]
    pub stratify: Stratify,
    #[serde(skip)]
    #[arg(long, global = true, env = "BANKWATCH_OUT", default_value = "bankwatch-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratify {
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a seeded synthetic dataset (and optionally quarterly reports).
    Synth(SynthArgs),
    /// Drop records with missing or non-finite values.
    Clean(InputArgs),
    /// Balance classes with SMOTE.
    Smote(SmoteArgs),
    /// Seeded train/test split.
    Split(SplitArgs),
    /// Fit one model.
    Train(TrainArgs),
    /// Confusion matrix and accuracy of a saved model.
    Evaluate(EvaluateArgs),
    /// Cross-validated grid search; refits the winner on all input rows.
    Gridsearch(GridArgs),
    /// Quarterly probability series and first warnings per bank.
    Trend(TrendArgs),
    /// synth → clean → smote → split → gridsearch × models → evaluate → compare.
    Pipeline(PipelineArgs),
    /// Re-run a manifest and check the outputs are byte-identical.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Clean(_) => "clean",
            Command::Smote(_) => "smote",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Gridsearch(_) => "gridsearch",
            Command::Trend(_) => "trend",
            Command::Pipeline(_) => "pipeline",
            Command::Replay(_) => "replay",
        }
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: bankwatch_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// `gaussian-sep<d>`, `xor-pair` or `xor-mixed`.
    #[arg(long, default_value = "gaussian-sep2")]
    pub recipe: String,
    #[arg(long, default_value_t = 44)]
    pub n_active: usize,
    #[arg(long, default_value_t = 21)]
    pub n_bankrupt: usize,
    /// Also write `reports.csv` with this many failing banks.
    #[arg(long, default_value_t = 0)]
    pub report_banks: usize,
    #[arg(long, default_value_t = 8)]
    pub quarters: usize,
    #[arg(long, default_value = "2016-Q1")]
    pub start: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SmoteArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Minority:majority ratio to reach.
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.75)]
    pub fraction: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: Hyper,
}

/// Hyperparameter overrides; unset fields keep the family defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct Hyper {
    #[arg(long = "trees", alias = "B")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trees: Option<usize>,
    #[arg(long = "max-features", alias = "p")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_features: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_samples_split: Option<usize>,
    /// Debug only: grow every tree on the full training set.
    #[arg(long)]
    #[serde(default)]
    pub no_bootstrap: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[arg(long = "C", alias = "c")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// `linear` or `rbf`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_passes: Option<usize>,
}

impl Hyper {
    fn pairs(&self) -> Vec<(&'static str, Value)> {
        let mut out = Vec::new();
        let mut push = |name, v: Option<Value>| {
            if let Some(v) = v {
                out.push((name, v));
            }
        };
        push("trees", self.trees.map(|v| json!(v)));
        push("max_features", self.max_features.map(|v| json!(v)));
        push("min_samples_split", self.min_samples_split.map(|v| json!(v)));
        push("bootstrap", self.no_bootstrap.then(|| json!(false)));
        push("ridge", self.ridge.map(|v| json!(v)));
        push("max_iter", self.max_iter.map(|v| json!(v)));
        push("grad_tol", self.grad_tol.map(|v| json!(v)));
        push("C", self.c.map(|v| json!(v)));
        push("kernel", self.kernel.as_ref().map(|v| json!(v)));
        push("gamma", self.gamma.map(|v| json!(v)));
        push("tol", self.tol.map(|v| json!(v)));
        push("max_passes", self.max_passes.map(|v| json!(v)));
        out
    }

    /// Family defaults for `kind` with these overrides applied.
    pub fn resolve(&self, kind: ModelKind, m: usize, seed: u64) -> CliResult<ModelSpec> {
        let mut spec = ModelSpec::default_for(kind, m, seed);
        if self.gamma.is_some() && self.kernel.as_deref().is_some_and(|k| k.eq_ignore_ascii_case("linear")) {
            return Err(CliError::config("--gamma only applies to the rbf kernel"));
        }
        for (name, value) in self.pairs() {
            spec.set(name, &value, m)
                .map_err(|e| CliError::config(format!("--{}: {e}", name.replace('_', "-"))))?;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    /// Testing data.
    #[arg(long)]
    pub input: PathBuf,
    /// Training data, reported alongside the testing accuracy.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    /// JSON grid `{model, axes, folds, seed}`; built-in grid when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrendArgs {
    /// CSV with `bank_id,period,<codes...>`.
    #[arg(long)]
    pub reports: PathBuf,
    /// Saved models; repeat for several.
    #[arg(long = "model-file", required = true)]
    pub model_files: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Supervisory event date (YYYY-MM-DD) for lead times.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_date: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[arg(long, default_value = "xor-mixed")]
    pub recipe: String,
    #[arg(long, default_value_t = 44)]
    pub n_active: usize,
    #[arg(long, default_value_t = 21)]
    pub n_bankrupt: usize,
    #[arg(long, value_parser = parse_kind, value_delimiter = ',', default_value = "forest,logreg,svm")]
    pub models: Vec<ModelKind>,
    #[arg(long, default_value_t = 0.75)]
    pub fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
