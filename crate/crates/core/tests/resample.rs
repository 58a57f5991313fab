mod oracles;

use bankwatch_core::dataset::split;
use bankwatch_core::resample::{balance, knn_minority, SmoteConfig, SYNTHETIC_PREFIX};
use bankwatch_core::synth::{generate, Recipe};
use bankwatch_core::{round_half_even, Dataset, FeatureSchema, Label};
use oracles::{brute_knn, dataset, on_segment};
use proptest::prelude::*;

/// Checks every appended record against every (parent, neighbour) pair
/// drawn from the original minority records.
fn check_synthetic(original: &Dataset, balanced: &Dataset, k: usize, minority: Label) {
    let parents: Vec<usize> = (0..original.n())
        .filter(|&i| original.records()[i].label == minority)
        .collect();
    let neighbours: Vec<Vec<usize>> = parents.iter().map(|&p| brute_knn(original, p, k)).collect();
    for s in &balanced.records()[original.n()..] {
        assert_eq!(s.label, minority);
        assert!(s.bank_id.starts_with(SYNTHETIC_PREFIX));
        assert_eq!(s.period, None);
        let mut found = false;
        for (slot, &p) in parents.iter().enumerate() {
            let a = &original.records()[p].values;
            for &nb in &neighbours[slot] {
                let b = &original.records()[nb].values;
                if on_segment(&s.values, a, b, 1e-9) {
                    found = true;
                    for ((v, x), y) in s.values.iter().zip(a).zip(b) {
                        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                        assert!(*v >= lo - 1e-12 * lo.abs().max(1.0) && *v <= hi + 1e-12 * hi.abs().max(1.0));
                    }
                }
            }
        }
        assert!(found, "synthetic point {:?} lies on no parent-neighbour segment", s.values);
    }
}

#[test]
fn knn_examples() {
    let d = dataset(vec![vec![0.0], vec![1.0], vec![10.0], vec![50.0], vec![51.0], vec![52.0], vec![53.0]], &[1, 1, 1, 0, 0, 0, 0]);
    assert_eq!(knn_minority(&d, 0, 1).unwrap(), vec![1]);
    assert_eq!(knn_minority(&d, 0, 2).unwrap(), brute_knn(&d, 0, 2));
    assert!(knn_minority(&d, 0, 3).is_err());

    let d = dataset(vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![6.0, 8.0], vec![9.0, 9.0], vec![9.0, 9.5], vec![9.0, 9.7], vec![9.1, 9.0]], &[1, 1, 1, 0, 0, 0, 0]);
    assert_eq!(knn_minority(&d, 0, 2).unwrap(), vec![1, 2]);
}

#[test]
fn shape_44_21_becomes_44_44_and_splits_33_33_11_11() {
    let d = generate(Recipe::Gaussian { separation: 2.0 }, &FeatureSchema::commercial(), 44, 21, 0).unwrap();
    assert_eq!(d.class_counts(), [44, 21]);
    let out = balance(&d, &SmoteConfig::default()).unwrap();
    assert_eq!(out.dataset.class_counts(), [44, 44]);
    assert_eq!(out.added, 23);
    assert_eq!(&out.dataset.records()[..65], d.records());
    check_synthetic(&d, &out.dataset, 5, Label::Bankrupt);
    let s = split(&out.dataset, 0.75, 0, true).unwrap();
    assert_eq!(s.train.class_counts(), [33, 33]);
    assert_eq!(s.test.class_counts(), [11, 11]);
}

#[test]
fn balanced_input_is_unchanged() {
    let d = generate(Recipe::Gaussian { separation: 1.0 }, &FeatureSchema::rural(), 43, 43, 1).unwrap();
    let out = balance(&d, &SmoteConfig::default()).unwrap();
    assert_eq!(out.dataset, d);
    assert_eq!(out.minority, None);
}

#[test]
fn deterministic_under_seed() {
    let d = generate(Recipe::XorPair, &FeatureSchema::rural(), 30, 12, 2).unwrap();
    let cfg = SmoteConfig { seed: 9, ..Default::default() };
    let a = balance(&d, &cfg).unwrap().dataset.to_csv_string().unwrap();
    let b = balance(&d, &cfg).unwrap().dataset.to_csv_string().unwrap();
    assert_eq!(a, b);
    let c = balance(&d, &SmoteConfig { seed: 10, ..cfg }).unwrap().dataset.to_csv_string().unwrap();
    assert_ne!(a, c);
}

#[test]
fn active_minority_is_oversampled_too() {
    let d = generate(Recipe::Gaussian { separation: 1.0 }, &FeatureSchema::generic(3), 10, 25, 3).unwrap();
    let out = balance(&d, &SmoteConfig { k: 3, ..Default::default() }).unwrap();
    assert_eq!(out.minority, Some(Label::Active));
    assert_eq!(out.dataset.class_counts(), [25, 25]);
    check_synthetic(&d, &out.dataset, 3, Label::Active);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_segments_and_hull(
        n_min in 4usize..15,
        extra in 0usize..20,
        m in 1usize..4,
        k in 1usize..4,
        ratio in 0.3f64..=1.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(k < n_min);
        let n_maj = n_min + extra;
        let d = generate(Recipe::Gaussian { separation: 1.0 }, &FeatureSchema::generic(m), n_maj, n_min, seed).unwrap();
        let minority_label = if extra > 0 { Label::Bankrupt } else { Label::Active };
        let out = balance(&d, &SmoteConfig { k, target_ratio: ratio, seed }).unwrap();
        if extra == 0 {
            prop_assert_eq!(out.dataset.n(), d.n());
            return Ok(());
        }
        let target = round_half_even(ratio * n_maj as f64).max(n_min);
        prop_assert_eq!(out.dataset.class_counts(), [n_maj, target]);
        prop_assert_eq!(&out.dataset.records()[..d.n()], d.records());
        check_synthetic(&d, &out.dataset, k, minority_label);
    }
}

#[test]
fn precondition_errors() {
    let d = dataset(vec![vec![0.0], vec![1.0], vec![2.0]], &[1, 1, 1]);
    assert!(balance(&d, &SmoteConfig::default()).is_err());
    let d = dataset((0..8).map(|i| vec![i as f64]).collect(), &[1, 1, 0, 0, 0, 0, 0, 0]);
    assert!(balance(&d, &SmoteConfig { k: 2, ..Default::default() }).is_err());
    assert!(balance(&d, &SmoteConfig { k: 1, target_ratio: 0.0, seed: 0 }).is_err());
    assert!(balance(&d, &SmoteConfig { k: 1, ..Default::default() }).is_ok());
}
