//! Soft-margin support vector machine.
//!
//! Training solves the dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ αᵢ ≤ C,   Qᵢⱼ = yᵢyⱼK(xᵢ, xⱼ)
//! ```
//!
//! by pairwise coordinate updates on the maximally violating pair
//! (second-order working-set selection) until the KKT gap falls below
//! `tol`. Labels map bankrupt → +1 and active → −1, so `f(x) ≥ 0` is the
//! bankrupt side. Probabilities come from a Platt sigmoid fitted over the
//! decision values.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::logreg::{self, LogisticConfig};
use crate::seeded_rng;
use crate::standardize::Standardizer;

const TAU: f64 = 1e-12;
/// Dual coefficients at or below this are dropped from the stored model.
pub const ALPHA_EPS: f64 = 1e-8;
const PLATT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    /// RBF with `gamma = 1/m`.
    pub fn rbf_default(m: usize) -> Kernel {
        Kernel::Rbf {
            gamma: 1.0 / m.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: Kernel,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            kernel: Kernel::Linear,
            tol: 1e-3,
            max_passes: 1000,
            seed: 0,
        }
    }
}

/// `p(bankrupt | f) = 1 / (1 + exp(A·f + B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
    pub converged: bool,
}

impl Platt {
    pub fn probability(&self, f: f64) -> f64 {
        logreg::sigmoid(-(self.a * f + self.b))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SvmDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Final `max_{I_up}(−yG) − min_{I_low}(−yG)`.
    pub kkt_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub schema: Vec<String>,
    pub kernel: Kernel,
    pub c: f64,
    /// Stored in standardized coordinates.
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// ±1 per support vector.
    pub labels: Vec<f64>,
    pub b: f64,
    pub platt: Option<Platt>,
    pub standardization: Standardizer,
    /// Cached `w = Σ αᵢyᵢxᵢ` for the linear kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    pub diagnostics: SvmDiagnostics,
}

/// Decision value, calibrated probability and both class readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvmPrediction {
    pub decision: f64,
    pub probability: f64,
    pub sign_class: Label,
    pub probability_class: Label,
    pub disagree: bool,
}

pub fn fit_svm(d: &Dataset, cfg: &SvmConfig) -> Result<SvmModel> {
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C must be > 0, got {}", cfg.c)));
    }
    if let Kernel::Rbf { gamma } = cfg.kernel {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", cfg.tol)));
    }
    if !d.has_both_classes() {
        return Err(Error::SingleClass("SVM training needs both classes".into()));
    }
    let rows = d.rows();
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite);
    }
    let standardizer = Standardizer::fit(&rows, d.m());
    let x = standardizer.apply_all(&rows)?;
    let y: Vec<f64> = d.records().iter().map(|r| r.label.sign()).collect();
    let n = x.len();
    let c = cfg.c;

    let kernel: Vec<f64> = {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = cfg.kernel.eval(&x[i], &x[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    };
    let kij = |i: usize, j: usize| kernel[i * n + j];

    let mut alpha = vec![0.0; n];
    // gradient of the dual objective: G = Qα − e
    let mut grad = vec![-1.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(cfg.seed));

    let in_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let in_low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

    let max_iter = cfg.max_passes.saturating_mul(n).max(1);
    let mut diag = SvmDiagnostics::default();
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for &t in &order {
            if in_up(t, &alpha) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            for &t in &order {
                if !in_low(t, &alpha) {
                    continue;
                }
                let ygt = y[t] * grad[t];
                if ygt > gmax2 {
                    gmax2 = ygt;
                }
                let grad_diff = gmax + ygt;
                if grad_diff > 0.0 {
                    let quad = kij(i, i) + kij(t, t) - 2.0 * kij(i, t);
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj < best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        diag.kkt_gap = gmax + gmax2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            diag.converged = true;
            break;
        };
        if diag.kkt_gap < cfg.tol {
            diag.converged = true;
            break;
        }
        if diag.iterations >= max_iter {
            break;
        }
        diag.iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = kij(i, i) + kij(j, j) - 2.0 * kij(i, j);
        let quad = if quad > 0.0 { quad } else { TAU };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kij(t, i) * di + y[j] * kij(t, j) * dj);
        }
    }

    let b = bias(&alpha, &grad, &y, c);
    let keep: Vec<usize> = (0..n).filter(|&t| alpha[t] > ALPHA_EPS).collect();
    let support_vectors: Vec<Vec<f64>> = keep.iter().map(|&t| x[t].clone()).collect();
    let alphas: Vec<f64> = keep.iter().map(|&t| alpha[t]).collect();
    let labels: Vec<f64> = keep.iter().map(|&t| y[t]).collect();
    let w = matches!(cfg.kernel, Kernel::Linear).then(|| {
        let mut w = vec![0.0; d.m()];
        for ((sv, a), l) in support_vectors.iter().zip(&alphas).zip(&labels) {
            for (wj, xj) in w.iter_mut().zip(sv) {
                *wj += a * l * xj;
            }
        }
        w
    });
    Ok(SvmModel {
        schema: d.schema().code_list(),
        kernel: cfg.kernel,
        c,
        support_vectors,
        alphas,
        labels,
        b,
        platt: None,
        standardization: standardizer,
        w,
        diagnostics: diag,
    })
}

/// Bias from free support vectors (averaged), or the midpoint of the
/// feasible interval when every multiplier sits at a bound.
fn bias(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let r = if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    };
    -r
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.schema.len()
    }

    fn standardized(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        self.standardization.apply(x)
    }

    /// `f(x) = Σ αᵢyᵢK(xᵢ, x) + b` over the stored support vectors.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardized(x)?;
        Ok(self.expansion(&z))
    }

    fn expansion(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.labels))
            .map(|(sv, (a, l))| a * l * self.kernel.eval(sv, z))
            .sum::<f64>()
            + self.b
    }

    /// Same as [`decision_value`](Self::decision_value) but uses the cached
    /// `w` when available.
    pub fn decision_value_fast(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardized(x)?;
        Ok(match &self.w {
            Some(w) => w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + self.b,
            None => self.expansion(&z),
        })
    }

    /// Bankrupt when `f(x) ≥ 0`.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(if self.decision_value(x)? >= 0.0 {
            Label::Bankrupt
        } else {
            Label::Active
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let platt = self.platt.ok_or(Error::NotCalibrated)?;
        Ok(platt.probability(self.decision_value(x)?))
    }

    pub fn assess(&self, x: &[f64]) -> Result<SvmPrediction> {
        let platt = self.platt.ok_or(Error::NotCalibrated)?;
        let decision = self.decision_value(x)?;
        let probability = platt.probability(decision);
        let sign_class = if decision >= 0.0 {
            Label::Bankrupt
        } else {
            Label::Active
        };
        let probability_class = Label::from_probability(probability);
        Ok(SvmPrediction {
            decision,
            probability,
            sign_class,
            probability_class,
            disagree: sign_class != probability_class,
        })
    }

    /// Dual objective `Σα − ½ΣΣ αᵢαⱼyᵢyⱼK(xᵢ, xⱼ)` (maximization form).
    pub fn dual_objective(&self) -> f64 {
        let mut quad = 0.0;
        for (i, si) in self.support_vectors.iter().enumerate() {
            for (j, sj) in self.support_vectors.iter().enumerate() {
                quad += self.alphas[i] * self.alphas[j] * self.labels[i] * self.labels[j] * self.kernel.eval(si, sj);
            }
        }
        self.alphas.iter().sum::<f64>() - 0.5 * quad
    }

    /// `Σ αᵢyᵢ` over stored support vectors.
    pub fn dual_balance(&self) -> f64 {
        self.alphas.iter().zip(&self.labels).map(|(a, l)| a * l).sum()
    }

    /// Linear weights and bias on the raw feature scale.
    pub fn raw_linear(&self) -> Option<(Vec<f64>, f64)> {
        let w = self.w.as_ref()?;
        let s = &self.standardization;
        let raw: Vec<f64> = w.iter().zip(&s.std).map(|(wj, sd)| wj / sd).collect();
        let shift: f64 = raw.iter().zip(&s.mean).map(|(wj, mu)| wj * mu).sum();
        Some((raw, self.b - shift))
    }
}

/// Fits the Platt sigmoid by ridge-stabilized Newton on the 1-D decision
/// values of `d`.
pub fn fit_platt(model: &SvmModel, d: &Dataset, max_iter: usize) -> Result<SvmModel> {
    if d.is_empty() {
        return Err(Error::InsufficientData("Platt scaling on an empty dataset".into()));
    }
    if !d.has_both_classes() {
        return Err(Error::SingleClass("Platt scaling needs both classes".into()));
    }
    let f: Vec<f64> = d
        .records()
        .iter()
        .map(|r| model.decision_value(&r.values))
        .collect::<Result<_>>()?;
    let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
        return Err(Error::Degenerate("all decision values are identical".into()));
    }
    let refs: Vec<&[f64]> = f.iter().map(std::slice::from_ref).collect();
    let scale = Standardizer::fit(&refs, 1);
    let z: Vec<Vec<f64>> = scale.apply_all(&refs)?;
    let y: Vec<f64> = d.records().iter().map(|r| r.label.as_u8() as f64).collect();
    let cfg = LogisticConfig {
        ridge: PLATT_RIDGE,
        max_iter,
        grad_tol: 1e-8,
    };
    let fit = logreg::newton(&z, &y, &cfg)?;
    let (mu, sd) = (scale.mean[0], scale.std[0]);
    let slope = fit.beta[0] / sd;
    let mut out = model.clone();
    out.platt = Some(Platt {
        a: -slope,
        b: -(fit.beta0 - slope * mu),
        converged: fit.diagnostics.converged,
    });
    Ok(out)
}
