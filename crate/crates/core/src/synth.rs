//! Seeded synthetic bank datasets.
//!
//! Recipes:
//! - `gaussian-sep<d>`: class-conditional Gaussians with identity covariance
//!   whose means differ by Euclidean distance `d` (spread evenly over all
//!   features).
//! - `xor-pair`: the first two features sit in four clusters at `(±2, ±2)`;
//!   bankrupt when both share a sign. Remaining features are pure noise, so
//!   no linear separator does better than 3 of the 4 clusters.
//! - `xor-mixed`: `xor-pair` plus a weak linear shift (total distance 1)
//!   spread over the remaining features.
//!
//! Each feature is then affinely rescaled by a fixed per-column scale so the
//! columns look like ratios of very different magnitude.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{BankRecord, Dataset, FeatureSchema, Label, Quarter};
use crate::error::{Error, Result};
use crate::seeded_rng;

pub const XOR_OFFSET: f64 = 2.0;
const XOR_MIXED_SHIFT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Recipe {
    Gaussian { separation: f64 },
    XorPair,
    XorMixed,
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::Gaussian { separation } => write!(f, "gaussian-sep{separation}"),
            Recipe::XorPair => f.write_str("xor-pair"),
            Recipe::XorMixed => f.write_str("xor-mixed"),
        }
    }
}

impl FromStr for Recipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xor-pair" => Ok(Recipe::XorPair),
            "xor-mixed" => Ok(Recipe::XorMixed),
            _ => {
                let sep = s
                    .strip_prefix("gaussian-sep")
                    .and_then(|d| d.parse::<f64>().ok())
                    .filter(|d| d.is_finite() && *d >= 0.0)
                    .ok_or_else(|| Error::Unknown(format!("synthetic recipe `{s}`")))?;
                Ok(Recipe::Gaussian { separation: sep })
            }
        }
    }
}

impl TryFrom<String> for Recipe {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Recipe> for String {
    fn from(r: Recipe) -> String {
        r.to_string()
    }
}

impl Recipe {
    pub fn is_nonlinear(&self) -> bool {
        !matches!(self, Recipe::Gaussian { .. })
    }

    fn minimum_features(&self) -> usize {
        match self {
            Recipe::Gaussian { .. } => 1,
            Recipe::XorPair => 2,
            Recipe::XorMixed => 3,
        }
    }

    /// Class-conditional mean at "bankruptcy progress" `t ∈ [0, 1]`, where
    /// `t = 0` is the active profile and `t = 1` the bankrupt one. For the
    /// XOR recipes the active end is the `(+, −)` cluster and the bankrupt
    /// end the `(+, +)` cluster.
    fn mean_at(&self, m: usize, t: f64, cluster_sign: f64) -> Vec<f64> {
        let mut mu = vec![0.0; m];
        match *self {
            Recipe::Gaussian { separation } => {
                let step = separation / (m as f64).sqrt();
                mu.iter_mut().for_each(|v| *v = t * step);
            }
            Recipe::XorPair | Recipe::XorMixed => {
                // t moves the second coordinate from −s·sign to +s·sign
                mu[0] = XOR_OFFSET * cluster_sign;
                mu[1] = XOR_OFFSET * cluster_sign * (2.0 * t - 1.0);
                if matches!(self, Recipe::XorMixed) {
                    let step = XOR_MIXED_SHIFT / ((m - 2) as f64).sqrt();
                    mu[2..].iter_mut().for_each(|v| *v = t * step);
                }
            }
        }
        mu
    }
}

/// Column `j` is reported as `scale_j · z + offset_j`.
pub fn column_scale(j: usize) -> (f64, f64) {
    const SCALES: [f64; 4] = [0.05, 1.0, 12.0, 0.3];
    const OFFSETS: [f64; 4] = [0.1, 0.0, 60.0, -0.2];
    (SCALES[j % 4], OFFSETS[j % 4])
}

fn draw_row<R: Rng>(rng: &mut R, mean: &[f64]) -> Vec<f64> {
    mean.iter()
        .enumerate()
        .map(|(j, mu)| {
            let z: f64 = StandardNormal.sample(rng);
            let (scale, offset) = column_scale(j);
            scale * (mu + z) + offset
        })
        .collect()
}

/// A dataset of `n_active + n_bankrupt` records in shuffled order.
pub fn generate(recipe: Recipe, schema: &FeatureSchema, n_active: usize, n_bankrupt: usize, seed: u64) -> Result<Dataset> {
    if n_active < 1 || n_bankrupt < 1 {
        return Err(Error::InvalidParameter("synthetic class counts must be >= 1".into()));
    }
    let m = schema.len();
    if m < recipe.minimum_features() {
        return Err(Error::InvalidParameter(format!(
            "recipe {recipe} needs at least {} features, schema has {m}",
            recipe.minimum_features()
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Active, n_active)
        .chain(std::iter::repeat_n(Label::Bankrupt, n_bankrupt))
        .collect();
    labels.shuffle(&mut rng);
    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let t = if label == Label::Bankrupt { 1.0 } else { 0.0 };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mean = recipe.mean_at(m, t, sign);
            BankRecord {
                bank_id: format!("bank-{i:03}"),
                period: None,
                values: draw_row(&mut rng, &mean),
                label,
            }
        })
        .collect();
    Dataset::new(schema.clone(), records)
}

/// Quarterly reports for `n_banks` failing banks drifting from the active
/// profile to the bankrupt one. Each bank crosses the midpoint at a random
/// quarter; every record is labelled bankrupt (the bank's eventual status).
pub fn generate_reports(
    recipe: Recipe,
    schema: &FeatureSchema,
    n_banks: usize,
    quarters: usize,
    start: Quarter,
    seed: u64,
) -> Result<Dataset> {
    if n_banks < 1 || quarters < 2 {
        return Err(Error::InvalidParameter("need >= 1 bank and >= 2 quarters".into()));
    }
    let m = schema.len();
    if m < recipe.minimum_features() {
        return Err(Error::InvalidParameter(format!(
            "recipe {recipe} needs at least {} features",
            recipe.minimum_features()
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut records = Vec::with_capacity(n_banks * quarters);
    for b in 0..n_banks {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let cross = rng.random_range(1..quarters) as f64;
        let mut period = start;
        for q in 0..quarters {
            // logistic drift centred on the crossing quarter
            let t = 1.0 / (1.0 + (-(q as f64 - cross + 0.5) * 1.5).exp());
            let mean = recipe.mean_at(m, t, sign);
            let values = mean
                .iter()
                .enumerate()
                .map(|(j, mu)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let (scale, offset) = column_scale(j);
                    scale * (mu + 0.3 * z) + offset
                })
                .collect();
            records.push(BankRecord {
                bank_id: format!("bank-{}", (b'A' + (b % 26) as u8) as char),
                period: Some(period),
                values,
                label: Label::Bankrupt,
            });
            period = period.next();
        }
    }
    Dataset::new(schema.clone(), records)
}
