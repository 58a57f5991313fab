//! SMOTE oversampling of the minority class.
//!
//! Each synthetic record is `a + g·(b − a)` where `a` is a real minority
//! record, `b` one of its `k` nearest minority neighbours (raw-feature
//! Euclidean distance) and `g` is uniform on `[0, 1]`. Parents are visited
//! round-robin in record order until the deficit is filled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BankRecord, Dataset, Label};
use crate::error::{Error, Result};
use crate::{round_half_even, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k: usize,
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

pub const SYNTHETIC_PREFIX: &str = "synthetic-";

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The minority class, or `None` when the classes are the same size.
pub fn minority_class(d: &Dataset) -> Option<Label> {
    let [active, bankrupt] = d.class_counts();
    match active.cmp(&bankrupt) {
        std::cmp::Ordering::Less => Some(Label::Active),
        std::cmp::Ordering::Greater => Some(Label::Bankrupt),
        std::cmp::Ordering::Equal => None,
    }
}

/// Indices of the `k` records of the sample's class nearest to it, nearest
/// first, excluding the sample itself. Ties go to the lower index.
pub fn knn_minority(d: &Dataset, sample_index: usize, k: usize) -> Result<Vec<usize>> {
    let sample = d.records().get(sample_index).ok_or_else(|| {
        Error::InvalidParameter(format!("sample index {sample_index} out of range"))
    })?;
    let class = sample.label;
    let counts = d.class_counts();
    let other = counts[class.other().index()];
    if other > 0 && counts[class.index()] > other {
        return Err(Error::InvalidParameter(format!(
            "record {sample_index} belongs to the majority class"
        )));
    }
    if k == 0 || k >= counts[class.index()] {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must be in 1..{} (minority class size)",
            counts[class.index()]
        )));
    }
    Ok(nearest_of(d, sample_index, k))
}

fn nearest_of(d: &Dataset, sample_index: usize, k: usize) -> Vec<usize> {
    let records = d.records();
    let sample = &records[sample_index];
    let mut candidates: Vec<(f64, usize)> = records
        .iter()
        .enumerate()
        .filter(|(i, r)| *i != sample_index && r.label == sample.label)
        .map(|(i, r)| (squared_distance(&sample.values, &r.values), i))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.truncate(k);
    candidates.into_iter().map(|(_, i)| i).collect()
}

/// `sample + gap · (neighbour − sample)`.
pub fn synthesize(sample: &[f64], neighbour: &[f64], gap: f64) -> Result<Vec<f64>> {
    if sample.len() != neighbour.len() {
        return Err(Error::Dimension {
            expected: sample.len(),
            actual: neighbour.len(),
        });
    }
    if !(0.0..=1.0).contains(&gap) {
        return Err(Error::InvalidParameter(format!("gap {gap} outside [0, 1]")));
    }
    Ok(sample
        .iter()
        .zip(neighbour)
        .map(|(a, b)| a + gap * (b - a))
        .collect())
}

/// Summary of one balancing run.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceOutcome {
    pub dataset: Dataset,
    pub minority: Option<Label>,
    pub added: usize,
}

/// Appends synthetic minority records until the minority count reaches
/// `round(target_ratio · majority)`. Original records are kept in place.
pub fn balance(d: &Dataset, cfg: &SmoteConfig) -> Result<BalanceOutcome> {
    if !(cfg.target_ratio > 0.0 && cfg.target_ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target ratio {} outside (0, 1]",
            cfg.target_ratio
        )));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let counts = d.class_counts();
    if counts.contains(&0) {
        return Err(Error::SingleClass("SMOTE needs both classes present".into()));
    }
    let Some(minority) = minority_class(d) else {
        return Ok(BalanceOutcome {
            dataset: d.clone(),
            minority: None,
            added: 0,
        });
    };
    let n_min = counts[minority.index()];
    let n_maj = counts[minority.other().index()];
    if n_min <= cfg.k {
        return Err(Error::InsufficientData(format!(
            "minority class has {n_min} records, needs more than k = {}",
            cfg.k
        )));
    }
    let target = round_half_even(cfg.target_ratio * n_maj as f64);
    let deficit = target.saturating_sub(n_min);

    let parents: Vec<usize> = d
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == minority)
        .map(|(i, _)| i)
        .collect();
    let neighbours: Vec<Vec<usize>> = parents.iter().map(|&p| nearest_of(d, p, cfg.k)).collect();

    let mut rng = seeded_rng(cfg.seed);
    let mut records = d.records().to_vec();
    records.reserve(deficit);
    for s in 0..deficit {
        let slot = s % parents.len();
        let parent = &d.records()[parents[slot]];
        let pick = neighbours[slot][rng.random_range(0..cfg.k)];
        let gap: f64 = rng.random_range(0.0..=1.0);
        let values = synthesize(&parent.values, &d.records()[pick].values, gap)?;
        records.push(BankRecord {
            bank_id: format!("{SYNTHETIC_PREFIX}{s}"),
            period: None,
            values,
            label: minority,
        });
    }
    Ok(BalanceOutcome {
        dataset: d.with_records(records)?,
        minority: Some(minority),
        added: deficit,
    })
}
