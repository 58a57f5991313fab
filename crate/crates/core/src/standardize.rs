use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature `(mean, stddev)` captured from training data.
///
/// Uses the population standard deviation. Constant columns get a scale of
/// 1 so they map to zero instead of NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]], m: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; m];
        for r in rows {
            for (acc, v) in mean.iter_mut().zip(r.iter()) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0; m];
        for r in rows {
            for ((acc, v), mu) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn identity(m: usize) -> Self {
        Standardizer {
            mean: vec![0.0; m],
            std: vec![1.0; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(x
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (mu, s))| (v - mu) / s)
            .collect())
    }

    pub fn apply_all(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}
