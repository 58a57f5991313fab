//! Uniform handling of the three model families: prediction trait,
//! hyperparameter specs, and JSON persistence.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{read_to_string, Dataset, Label};
use crate::error::{Error, Result};
use crate::forest::{self, Forest, ForestConfig};
use crate::logreg::{self, LogisticConfig, LogisticModel};
use crate::svm::{self, Kernel, SvmConfig, SvmModel};

pub trait Classifier {
    /// Bankruptcy probability in `[0, 1]`.
    fn predict_proba(&self, x: &[f64]) -> Result<f64>;
    fn predict(&self, x: &[f64]) -> Result<Label>;
}

impl Classifier for LogisticModel {
    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        LogisticModel::predict_proba(self, x)
    }
    fn predict(&self, x: &[f64]) -> Result<Label> {
        LogisticModel::predict(self, x)
    }
}

impl Classifier for Forest {
    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Forest::predict_proba(self, x)
    }
    fn predict(&self, x: &[f64]) -> Result<Label> {
        Forest::predict(self, x)
    }
}

impl Classifier for SvmModel {
    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        SvmModel::predict_proba(self, x)
    }
    /// Sign rule, independent of calibration.
    fn predict(&self, x: &[f64]) -> Result<Label> {
        SvmModel::predict(self, x)
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        (**self).predict_proba(x)
    }
    fn predict(&self, x: &[f64]) -> Result<Label> {
        (**self).predict(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logreg,
    Forest,
    Svm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Logreg, ModelKind::Forest, ModelKind::Svm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::Forest => "forest",
            ModelKind::Svm => "svm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Logreg => "Logistic Regression",
            ModelKind::Forest => "Random Forest",
            ModelKind::Svm => "Support Vector Machines",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logreg" | "logistic" => Ok(ModelKind::Logreg),
            "forest" | "rf" => Ok(ModelKind::Forest),
            "svm" => Ok(ModelKind::Svm),
            other => Err(Error::Unknown(format!("model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum FittedModel {
    Logreg(LogisticModel),
    Forest(Forest),
    Svm(SvmModel),
}

impl Classifier for FittedModel {
    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        match self {
            FittedModel::Logreg(m) => m.predict_proba(x),
            FittedModel::Forest(m) => m.predict_proba(x),
            FittedModel::Svm(m) => m.predict_proba(x),
        }
    }
    fn predict(&self, x: &[f64]) -> Result<Label> {
        match self {
            FittedModel::Logreg(m) => m.predict(x),
            FittedModel::Forest(m) => m.predict(x),
            FittedModel::Svm(m) => m.predict(x),
        }
    }
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Logreg(_) => ModelKind::Logreg,
            FittedModel::Forest(_) => ModelKind::Forest,
            FittedModel::Svm(_) => ModelKind::Svm,
        }
    }

    pub fn schema(&self) -> &[String] {
        match self {
            FittedModel::Logreg(m) => &m.schema,
            FittedModel::Forest(m) => &m.schema,
            FittedModel::Svm(m) => &m.schema,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: FittedModel = serde_json::from_str(text)?;
        if let FittedModel::Forest(f) = &model {
            f.validate()?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_to_string(path.as_ref())?)
    }

    /// Errors unless the model was trained on exactly these codes.
    pub fn check_schema(&self, codes: &[String]) -> Result<()> {
        if self.schema() != codes {
            return Err(Error::Schema(format!(
                "{} model expects columns [{}], data has [{}]",
                self.kind(),
                self.schema().join(","),
                codes.join(",")
            )));
        }
        Ok(())
    }
}

/// A model family plus fully resolved hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Logreg(LogisticConfig),
    Forest(ForestConfig),
    Svm {
        #[serde(flatten)]
        config: SvmConfig,
        platt_max_iter: usize,
    },
}

pub const PLATT_MAX_ITER: usize = 100;

impl ModelSpec {
    /// Defaults for `kind`; `m` resolves `p = floor(sqrt(m))` for forests.
    pub fn default_for(kind: ModelKind, m: usize, seed: u64) -> Self {
        match kind {
            ModelKind::Logreg => ModelSpec::Logreg(LogisticConfig::default()),
            ModelKind::Forest => ModelSpec::Forest(ForestConfig {
                seed,
                max_features: Some(forest::default_max_features(m)),
                ..Default::default()
            }),
            ModelKind::Svm => ModelSpec::Svm {
                config: SvmConfig {
                    seed,
                    ..Default::default()
                },
                platt_max_iter: PLATT_MAX_ITER,
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Logreg(_) => ModelKind::Logreg,
            ModelSpec::Forest(_) => ModelKind::Forest,
            ModelSpec::Svm { .. } => ModelKind::Svm,
        }
    }

    /// Sets one named hyperparameter from a JSON value.
    ///
    /// Names: logreg `ridge`, `max_iter`, `grad_tol`; forest `trees` (`B`),
    /// `max_features` (`p`), `min_samples_split`, `bootstrap`, `seed`;
    /// svm `C`, `kernel` (`"linear"`, `"rbf"`, or `{"type":"rbf","gamma":g}`),
    /// `gamma`, `tol`, `max_passes`, `seed`. A bare `"rbf"` uses `gamma = 1/m`.
    pub fn set(&mut self, name: &str, value: &Value, m: usize) -> Result<()> {
        let bad = || Error::InvalidParameter(format!("bad value {value} for `{name}`"));
        let float = || value.as_f64().ok_or_else(bad);
        let int = || value.as_u64().map(|v| v as usize).ok_or_else(bad);
        match self {
            ModelSpec::Logreg(c) => match name {
                "ridge" => c.ridge = float()?,
                "max_iter" => c.max_iter = int()?,
                "grad_tol" => c.grad_tol = float()?,
                _ => return Err(Error::Unknown(format!("logreg hyperparameter `{name}`"))),
            },
            ModelSpec::Forest(c) => match name {
                "trees" | "B" => c.trees = int()?,
                "max_features" | "p" => c.max_features = Some(int()?),
                "min_samples_split" => c.min_samples_split = int()?,
                "bootstrap" => c.bootstrap = value.as_bool().ok_or_else(bad)?,
                "seed" => c.seed = value.as_u64().ok_or_else(bad)?,
                _ => return Err(Error::Unknown(format!("forest hyperparameter `{name}`"))),
            },
            ModelSpec::Svm { config, .. } => match name {
                "C" | "c" => config.c = float()?,
                "kernel" => config.kernel = parse_kernel(value, m)?,
                "gamma" => {
                    config.kernel = Kernel::Rbf { gamma: float()? };
                }
                "tol" => config.tol = float()?,
                "max_passes" => config.max_passes = int()?,
                "seed" => config.seed = value.as_u64().ok_or_else(bad)?,
                _ => return Err(Error::Unknown(format!("svm hyperparameter `{name}`"))),
            },
        }
        Ok(())
    }

    pub fn fit(&self, d: &Dataset) -> Result<FittedModel> {
        match self {
            ModelSpec::Logreg(c) => Ok(FittedModel::Logreg(logreg::fit(d, c)?)),
            ModelSpec::Forest(c) => Ok(FittedModel::Forest(forest::fit_forest(d, c)?)),
            ModelSpec::Svm {
                config,
                platt_max_iter,
            } => {
                let model = svm::fit_svm(d, config)?;
                // folds with constant decision values stay uncalibrated
                let model = match svm::fit_platt(&model, d, *platt_max_iter) {
                    Ok(calibrated) => calibrated,
                    Err(Error::Degenerate(_)) => model,
                    Err(e) => return Err(e),
                };
                Ok(FittedModel::Svm(model))
            }
        }
    }
}

pub fn parse_kernel(value: &Value, m: usize) -> Result<Kernel> {
    match value {
        Value::String(s) if s.eq_ignore_ascii_case("linear") => Ok(Kernel::Linear),
        Value::String(s) if s.eq_ignore_ascii_case("rbf") => Ok(Kernel::rbf_default(m)),
        Value::Object(_) => Ok(serde_json::from_value(value.clone())?),
        _ => Err(Error::InvalidParameter(format!("unknown kernel {value}"))),
    }
}
