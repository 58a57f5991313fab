//! Binary logistic regression fit by maximum likelihood.
//!
//! The fitter runs Newton–Raphson on the ridge-penalized log-likelihood
//! `L(β) − (λ/2)‖β‖²` (intercept unpenalized) from `β = 0`, halving the step
//! whenever the objective would decrease. Features are standardized with
//! training statistics, which are stored in the model and re-applied at
//! prediction time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::standardize::Standardizer;

/// Probability clamp used when evaluating the public log-likelihood.
pub const PROB_EPS: f64 = 1e-15;

const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub ridge: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            ridge: 1e-8,
            max_iter: 100,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// Penalized log-likelihood at the start and after each accepted step.
    pub objective_trace: Vec<f64>,
    /// Every training probability matched its label to 1e-6 with no ridge:
    /// the unpenalized MLE does not exist.
    pub separation_detected: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub schema: Vec<String>,
    pub beta0: f64,
    /// Coefficients on standardized features when `standardization` is set.
    pub beta: Vec<f64>,
    pub standardization: Option<Standardizer>,
    pub config: LogisticConfig,
    pub diagnostics: FitDiagnostics,
}

/// `1 / (1 + e^{-z})`, evaluated without overflow for any finite `z`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn linear(beta0: f64, beta: &[f64], x: &[f64]) -> f64 {
    beta0 + beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

fn check_dim(beta: &[f64], d: &Dataset) -> Result<()> {
    if beta.len() != d.m() {
        return Err(Error::Dimension {
            expected: d.m(),
            actual: beta.len(),
        });
    }
    Ok(())
}

/// `Σ yᵢ ln πᵢ + (1 − yᵢ) ln(1 − πᵢ)` on raw features, with `πᵢ` clamped to
/// `[ε, 1 − ε]`.
pub fn log_likelihood(beta0: f64, beta: &[f64], d: &Dataset) -> Result<f64> {
    check_dim(beta, d)?;
    if d.is_empty() {
        return Err(Error::InsufficientData("log-likelihood of an empty dataset".into()));
    }
    Ok(d
        .records()
        .iter()
        .map(|r| {
            let p = sigmoid(linear(beta0, beta, &r.values)).clamp(PROB_EPS, 1.0 - PROB_EPS);
            match r.label {
                Label::Bankrupt => p.ln(),
                Label::Active => (1.0 - p).ln(),
            }
        })
        .sum())
}

/// Gradient of the log-likelihood: `(Σ(yᵢ − πᵢ), Σ xᵢ(yᵢ − πᵢ))`.
pub fn score(beta0: f64, beta: &[f64], d: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_dim(beta, d)?;
    let mut g0 = 0.0;
    let mut g = vec![0.0; beta.len()];
    for r in d.records() {
        let resid = r.label.as_u8() as f64 - sigmoid(linear(beta0, beta, &r.values));
        g0 += resid;
        for (gj, xj) in g.iter_mut().zip(&r.values) {
            *gj += xj * resid;
        }
    }
    Ok((g0, g))
}

pub(crate) struct NewtonFit {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

fn penalized(theta: &[f64], x: &[Vec<f64>], y: &[f64], ridge: f64) -> f64 {
    let ll: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let z = linear(theta[0], &theta[1..], xi);
            // y ln σ(z) + (1 − y) ln σ(−z)
            -(yi * softplus(-z) + (1.0 - yi) * softplus(z))
        })
        .sum();
    ll - 0.5 * ridge * theta[1..].iter().map(|b| b * b).sum::<f64>()
}

fn gradient_norm(theta: &[f64], x: &[Vec<f64>], y: &[f64], ridge: f64) -> f64 {
    let mut g = vec![0.0; theta.len()];
    for (xi, &yi) in x.iter().zip(y) {
        let resid = yi - sigmoid(linear(theta[0], &theta[1..], xi));
        g[0] += resid;
        for (gj, xj) in g[1..].iter_mut().zip(xi) {
            *gj += xj * resid;
        }
    }
    for (gj, th) in g[1..].iter_mut().zip(&theta[1..]) {
        *gj -= ridge * th;
    }
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Newton–Raphson with step halving on the penalized log-likelihood.
/// `x` rows are used as given (no standardization).
pub(crate) fn newton(x: &[Vec<f64>], y: &[f64], cfg: &LogisticConfig) -> Result<NewtonFit> {
    let m = x.first().map_or(0, |r| r.len());
    let p = m + 1;
    let mut theta = vec![0.0; p];
    let mut objective = penalized(&theta, x, y, cfg.ridge);
    let mut diag = FitDiagnostics {
        objective_trace: vec![objective],
        ..Default::default()
    };

    loop {
        let mut grad = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut row = vec![1.0; p];
        for (xi, &yi) in x.iter().zip(y) {
            row[1..].copy_from_slice(xi);
            let pi = sigmoid(linear(theta[0], &theta[1..], xi));
            let w = pi * (1.0 - pi);
            for a in 0..p {
                grad[a] += row[a] * (yi - pi);
                for b in 0..=a {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        for j in 1..p {
            grad[j] -= cfg.ridge * theta[j];
            info[(j, j)] += cfg.ridge;
        }
        diag.final_grad_norm = grad.norm();
        if diag.final_grad_norm <= cfg.grad_tol {
            diag.converged = true;
            break;
        }
        if diag.iterations >= cfg.max_iter {
            break;
        }
        let Some(chol) = info.cholesky() else {
            return Err(Error::SingularHessian {
                iterations: diag.iterations,
            });
        };
        let step = chol.solve(&grad);
        if step.iter().any(|s| !s.is_finite()) {
            return Err(Error::SingularHessian {
                iterations: diag.iterations,
            });
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(th, s)| th + t * s).collect();
            let value = penalized(&cand, x, y, cfg.ridge);
            // Near the optimum the objective change drops below rounding
            // noise; fall back to requiring a smaller gradient there.
            let flat = t == 1.0 && objective - value <= 1e-12 * (1.0 + objective.abs());
            if value >= objective || (flat && gradient_norm(&cand, x, y, cfg.ridge) < diag.final_grad_norm) {
                accepted = Some((cand, value));
                break;
            }
            t *= 0.5;
        }
        diag.iterations += 1;
        match accepted {
            Some((cand, value)) => {
                theta = cand;
                objective = value;
                diag.objective_trace.push(value);
            }
            // no ascent direction left at machine precision
            None => break,
        }
    }

    if cfg.ridge == 0.0 && !x.is_empty() {
        let separated = x.iter().zip(y).all(|(xi, &yi)| {
            (yi - sigmoid(linear(theta[0], &theta[1..], xi))).abs() < 1e-6
        });
        if separated {
            diag.separation_detected = true;
            diag.converged = false;
            diag.warnings.push(
                "classes are perfectly separated; the unpenalized MLE does not exist (set ridge > 0)"
                    .into(),
            );
        }
    }

    Ok(NewtonFit {
        beta0: theta[0],
        beta: theta[1..].to_vec(),
        diagnostics: diag,
    })
}

/// Fits a logistic model on standardized features.
///
/// Single-class data produces an intercept-only model at the clamped
/// logit of the observed rate, flagged as not converged with a warning.
pub fn fit(d: &Dataset, cfg: &LogisticConfig) -> Result<LogisticModel> {
    if d.is_empty() {
        return Err(Error::InsufficientData("cannot fit on an empty dataset".into()));
    }
    if !(cfg.ridge >= 0.0 && cfg.ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {}", cfg.ridge)));
    }
    let rows = d.rows();
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite);
    }
    let standardizer = Standardizer::fit(&rows, d.m());
    let schema = d.schema().code_list();

    if !d.has_both_classes() {
        let rate = d.class_counts()[1] as f64 / d.n() as f64;
        let rate = rate.clamp(PROB_EPS, 1.0 - PROB_EPS);
        return Ok(LogisticModel {
            schema,
            beta0: (rate / (1.0 - rate)).ln(),
            beta: vec![0.0; d.m()],
            standardization: Some(standardizer),
            config: *cfg,
            diagnostics: FitDiagnostics {
                warnings: vec!["single-class training data; fitted intercept only".into()],
                ..Default::default()
            },
        });
    }

    let x = standardizer.apply_all(&rows)?;
    let y: Vec<f64> = d.records().iter().map(|r| r.label.as_u8() as f64).collect();
    let fit = newton(&x, &y, cfg)?;
    Ok(LogisticModel {
        schema,
        beta0: fit.beta0,
        beta: fit.beta,
        standardization: Some(standardizer),
        config: *cfg,
        diagnostics: fit.diagnostics,
    })
}

impl LogisticModel {
    /// A model with explicit raw-space coefficients and no standardization.
    pub fn from_coefficients(beta0: f64, beta: Vec<f64>) -> Self {
        LogisticModel {
            schema: (1..=beta.len()).map(|i| format!("X{i}")).collect(),
            beta0,
            beta,
            standardization: None,
            config: LogisticConfig::default(),
            diagnostics: FitDiagnostics::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    /// Linear predictor `β₀ + β·z` for a raw feature vector.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(match &self.standardization {
            Some(s) => linear(self.beta0, &self.beta, &s.apply(x)?),
            None => linear(self.beta0, &self.beta, x),
        })
    }

    /// Bankruptcy probability `π(x)`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(Label::from_probability(self.predict_proba(x)?))
    }

    /// Intercept and coefficients expressed on the raw feature scale.
    pub fn raw_coefficients(&self) -> (f64, Vec<f64>) {
        match &self.standardization {
            None => (self.beta0, self.beta.clone()),
            Some(s) => {
                let beta: Vec<f64> = self.beta.iter().zip(&s.std).map(|(b, sd)| b / sd).collect();
                let shift: f64 = beta.iter().zip(&s.mean).map(|(b, mu)| b * mu).sum();
                (self.beta0 - shift, beta)
            }
        }
    }
}
