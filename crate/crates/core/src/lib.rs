//! Bank bankruptcy prediction from precomputed CAMELS financial ratios.
//!
//! The crate covers the whole modelling path: CSV ingestion and cleaning,
//! SMOTE rebalancing, three classifiers (maximum-likelihood logistic
//! regression, a random forest of unpruned CART trees, and a soft-margin
//! SVM with Platt-scaled probabilities), confusion-matrix evaluation with
//! k-fold cross-validated grid search, and quarterly trend analysis that
//! flags the first period a model puts bankruptcy probability above a
//! threshold.
//!
//! Every stochastic step takes an explicit seed; identical inputs and seeds
//! produce identical outputs, including across parallel and serial forest
//! builds.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod forest;
pub mod logreg;
pub mod model;
pub mod resample;
pub mod standardize;
pub mod svm;
pub mod synth;
pub mod trend;

pub use dataset::{BankRecord, Dataset, Feature, FeatureSchema, Label, Quarter, SplitPair};
pub use error::{Error, Result};
pub use eval::{accuracy, confusion, ConfusionMatrix};
pub use forest::Forest;
pub use logreg::LogisticModel;
pub use model::{Classifier, FittedModel, ModelKind, ModelSpec};
pub use svm::{Kernel, SvmModel};
pub use trend::TrendSeries;

pub(crate) fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Rounds half-way cases to the nearest even integer.
///
/// Used wherever a fractional count has to become a record count
/// (train size, SMOTE target size) so that 0.75 · 86 = 64.5 becomes 64.
pub fn round_half_even(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let floor = x.floor();
    let frac = x - floor;
    let base = floor as usize;
    if frac > 0.5 {
        base + 1
    } else if frac < 0.5 {
        base
    } else if base % 2 == 0 {
        base
    } else {
        base + 1
    }
}

#[cfg(test)]
mod tests {
    use super::round_half_even;

    #[test]
    fn rounding_matches_split_table() {
        assert_eq!(round_half_even(0.75 * 88.0), 66);
        assert_eq!(round_half_even(0.75 * 86.0), 64);
        assert_eq!(round_half_even(0.75 * 4.0), 3);
        assert_eq!(round_half_even(2.5), 2);
        assert_eq!(round_half_even(3.5), 4);
        assert_eq!(round_half_even(3.49), 3);
        assert_eq!(round_half_even(0.0), 0);
    }
}
