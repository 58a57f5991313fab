//! Random forest of unpruned CART trees.
//!
//! Each tree is grown on a bootstrap sample. At every node `p` features are
//! drawn without replacement and the split with the lowest child-weighted
//! Gini impurity is taken; thresholds sit at midpoints between consecutive
//! distinct values and rows with `value <= threshold` go left. The forest's
//! bankruptcy probability is the fraction of trees voting bankrupt.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    /// `[active, bankrupt]` training counts reaching this leaf.
    Leaf { counts: [u32; 2] },
}

impl TreeNode {
    pub fn leaf_counts(&self, x: &[f64]) -> [u32; 2] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { counts } => return *counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Majority class of the leaf reached by `x`; ties go to bankrupt.
    pub fn predict(&self, x: &[f64]) -> Label {
        let [active, bankrupt] = self.leaf_counts(x);
        if bankrupt >= active {
            Label::Bankrupt
        } else {
            Label::Active
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }
}

/// Gini impurity `1 − Σ pᵢ²` of a class-count vector.
pub fn gini(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::InsufficientData("gini of an empty node".into()));
    }
    let t = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub weighted_gini: f64,
}

/// Exact split quality: Σ_c l_c²/n_L + Σ_c r_c²/n_R as a fraction.
/// Larger is better (lower weighted Gini).
#[derive(Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn new(left: [usize; 2], right: [usize; 2]) -> Self {
        let nl = (left[0] + left[1]) as u128;
        let nr = (right[0] + right[1]) as u128;
        let sl = (left[0] * left[0] + left[1] * left[1]) as u128;
        let sr = (right[0] * right[0] + right[1] * right[1]) as u128;
        Purity {
            num: sl * nr + sr * nl,
            den: nl * nr,
        }
    }

    fn beats(&self, other: &Purity) -> bool {
        self.num * other.den > other.num * self.den
    }
}

fn weighted_gini(left: [usize; 2], right: [usize; 2]) -> f64 {
    let nl = (left[0] + left[1]) as f64;
    let nr = (right[0] + right[1]) as f64;
    let n = nl + nr;
    nl / n * gini(&left).unwrap() + nr / n * gini(&right).unwrap()
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Best `(feature, threshold)` over the candidate features by weighted Gini.
///
/// Ties resolve to the lower feature index, then the lower threshold.
/// Returns `None` for a pure node or when no candidate feature takes two
/// distinct values on `rows`.
pub fn best_split(x: &[Vec<f64>], y: &[Label], rows: &[usize], candidates: &[usize]) -> Option<Split> {
    let mut totals = [0usize; 2];
    for &r in rows {
        totals[y[r].index()] += 1;
    }
    if totals[0] == 0 || totals[1] == 0 {
        return None;
    }
    let mut features = candidates.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<(Purity, usize, f64, [usize; 2], [usize; 2])> = None;
    let mut order: Vec<(f64, Label)> = Vec::with_capacity(rows.len());
    for &f in &features {
        order.clear();
        order.extend(rows.iter().map(|&r| (x[r][f], y[r])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for i in 0..order.len() - 1 {
            left[order[i].1.index()] += 1;
            let (lo, hi) = (order[i].0, order[i + 1].0);
            if lo == hi {
                continue;
            }
            let right = [totals[0] - left[0], totals[1] - left[1]];
            let purity = Purity::new(left, right);
            if best.as_ref().is_none_or(|b| purity.beats(&b.0)) {
                best = Some((purity, f, midpoint(lo, hi), left, right));
            }
        }
    }
    best.map(|(_, feature, threshold, left, right)| Split {
        feature,
        threshold,
        weighted_gini: weighted_gini(left, right),
    })
}

fn counts_of(y: &[Label], rows: &[usize]) -> [u32; 2] {
    let mut c = [0u32; 2];
    for &r in rows {
        c[y[r].index()] += 1;
    }
    c
}

/// Grows one unpruned tree on `rows` (indices into `x`/`y`, repeats allowed).
///
/// When none of the `p` drawn features can split an impure node, the
/// remaining features are searched before giving up, so every leaf of a
/// fully grown tree is pure or unsplittable.
pub fn build_tree<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[Label],
    rows: &[usize],
    p: usize,
    min_samples_split: usize,
    rng: &mut R,
) -> TreeNode {
    let m = x.first().map_or(0, |r| r.len());
    let counts = counts_of(y, rows);
    if rows.len() < min_samples_split.max(2) || counts[0] == 0 || counts[1] == 0 || m == 0 {
        return TreeNode::Leaf { counts };
    }
    let drawn = rand::seq::index::sample(rng, m, p.clamp(1, m)).into_vec();
    let split = best_split(x, y, rows, &drawn).or_else(|| {
        let rest: Vec<usize> = (0..m).filter(|f| !drawn.contains(f)).collect();
        if rest.is_empty() {
            None
        } else {
            best_split(x, y, rows, &rest)
        }
    });
    let Some(split) = split else {
        return TreeNode::Leaf { counts };
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| x[r][split.feature] <= split.threshold);
    let left = build_tree(x, y, &left_rows, p, min_samples_split, rng);
    let right = build_tree(x, y, &right_rows, p, min_samples_split, rng);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// Features tried per split; `None` means `floor(sqrt(m))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    /// Off only for debugging: every tree then sees the full dataset once.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_features: None,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

pub fn default_max_features(m: usize) -> usize {
    ((m as f64).sqrt().floor() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub schema: Vec<String>,
    pub n_trees: usize,
    pub max_features: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub oob_accuracy: Option<f64>,
    pub trees: Vec<TreeNode>,
}

/// Independent stream for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `n` row indices drawn uniformly with replacement.
pub fn bootstrap_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

struct GrownTree {
    tree: TreeNode,
    in_bag: Vec<bool>,
}

fn grow(x: &[Vec<f64>], y: &[Label], cfg: &ForestConfig, p: usize, index: usize) -> GrownTree {
    let n = x.len();
    let mut rng = tree_rng(cfg.seed, index);
    let rows = if cfg.bootstrap {
        bootstrap_sample(n, &mut rng)
    } else {
        (0..n).collect()
    };
    let mut in_bag = vec![false; n];
    for &r in &rows {
        in_bag[r] = true;
    }
    let tree = build_tree(x, y, &rows, p, cfg.min_samples_split, &mut rng);
    GrownTree { tree, in_bag }
}

pub fn fit_forest(d: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    if cfg.trees < 1 {
        return Err(Error::InvalidParameter("a forest needs at least one tree".into()));
    }
    if d.is_empty() {
        return Err(Error::InsufficientData("cannot fit a forest on an empty dataset".into()));
    }
    let m = d.m();
    let p = cfg.max_features.unwrap_or_else(|| default_max_features(m));
    if m > 0 && !(1..=m).contains(&p) {
        return Err(Error::InvalidParameter(format!("max_features {p} outside 1..={m}")));
    }
    let x: Vec<Vec<f64>> = d.records().iter().map(|r| r.values.clone()).collect();
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let y = d.labels();

    #[cfg(feature = "parallel")]
    let grown: Vec<GrownTree> = {
        use rayon::prelude::*;
        (0..cfg.trees)
            .into_par_iter()
            .map(|b| grow(&x, &y, cfg, p, b))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let grown: Vec<GrownTree> = (0..cfg.trees).map(|b| grow(&x, &y, cfg, p, b)).collect();

    let oob_accuracy = out_of_bag_accuracy(&x, &y, &grown);
    Ok(Forest {
        schema: d.schema().code_list(),
        n_trees: cfg.trees,
        max_features: p,
        min_samples_split: cfg.min_samples_split,
        bootstrap: cfg.bootstrap,
        seed: cfg.seed,
        oob_accuracy,
        trees: grown.into_iter().map(|g| g.tree).collect(),
    })
}

/// Majority-vote accuracy using only trees that did not see each record;
/// `None` unless every record is out-of-bag for at least one tree.
fn out_of_bag_accuracy(x: &[Vec<f64>], y: &[Label], grown: &[GrownTree]) -> Option<f64> {
    let mut correct = 0usize;
    for (i, xi) in x.iter().enumerate() {
        let mut voters = 0usize;
        let mut bankrupt = 0usize;
        for g in grown.iter().filter(|g| !g.in_bag[i]) {
            voters += 1;
            if g.tree.predict(xi) == Label::Bankrupt {
                bankrupt += 1;
            }
        }
        if voters == 0 {
            return None;
        }
        let vote = if 2 * bankrupt >= voters {
            Label::Bankrupt
        } else {
            Label::Active
        };
        if vote == y[i] {
            correct += 1;
        }
    }
    Some(correct as f64 / x.len() as f64)
}

impl Forest {
    pub fn dim(&self) -> usize {
        self.schema.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Number of trees voting bankrupt for `x`.
    pub fn bankrupt_votes(&self, x: &[f64]) -> Result<usize> {
        self.check(x)?;
        Ok(self
            .trees
            .iter()
            .filter(|t| t.predict(x) == Label::Bankrupt)
            .count())
    }

    /// Fraction of trees voting bankrupt.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(self.bankrupt_votes(x)? as f64 / self.trees.len() as f64)
    }

    /// Majority vote; exactly half the trees voting bankrupt counts as bankrupt.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        let votes = self.bankrupt_votes(x)?;
        Ok(if 2 * votes >= self.trees.len() {
            Label::Bankrupt
        } else {
            Label::Active
        })
    }

    /// Structural checks used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.trees.len() != self.n_trees || self.n_trees == 0 {
            return Err(Error::InvalidParameter(format!(
                "forest header says {} trees, found {}",
                self.n_trees,
                self.trees.len()
            )));
        }
        if let Some(f) = self.trees.iter().filter_map(|t| t.max_feature()).max() {
            if f >= self.dim() {
                return Err(Error::InvalidParameter(format!(
                    "tree splits on feature {f}, schema has {}",
                    self.dim()
                )));
            }
        }
        Ok(())
    }
}
