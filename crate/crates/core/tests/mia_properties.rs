use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_mia::data::{gen_synthetic, ImageDataset, SyntheticSpec};
use sparse_mia::mia::*;
use sparse_mia::nn::{build_initialized, ArchSpec, Model};
use sparse_mia::Tensor;
use std::collections::BTreeSet;

fn linear_model(inputs: usize, classes: usize, seed: u64) -> Model {
    build_initialized(
        &ArchSpec::Mlp {
            input_shape: vec![inputs],
            hidden: vec![],
            classes,
        },
        seed,
    )
    .unwrap()
}

fn logits(model: &Model, x: &[f64]) -> Vec<f64> {
    model
        .forward(&Tensor::from_vec(&[1, x.len()], x.to_vec()).unwrap())
        .unwrap()
        .row(0)
        .to_vec()
}

#[test]
fn full_size_partition_has_four_disjoint_sets() {
    let p = partition_dataset(60_000, 15_000, 1_000, 11).unwrap();
    let sets = [&p.train_target, &p.test_target, &p.train_shadow, &p.test_shadow];
    let mut all = BTreeSet::new();
    for s in sets {
        assert_eq!(s.len(), 15_000);
        all.extend(s.iter().copied());
    }
    assert_eq!(all.len(), 60_000);
    assert!(p.unused.is_empty());
    assert_eq!(p.val_target.len(), 1_000);
    assert_eq!(p.val_shadow.len(), 1_000);
    assert_eq!(p.fit_target().len(), 14_000);
    assert!(p.val_target.iter().all(|i| p.train_target.binary_search(i).is_ok()));
    assert!(p.val_shadow.iter().all(|i| p.train_shadow.binary_search(i).is_ok()));
    assert!(partition_dataset(59_999, 15_000, 0, 0).is_err());
}

proptest! {
    #[test]
    fn partitions_cover_without_overlap(n in 4usize..300, seed in any::<u64>()) {
        let size = n / 4;
        prop_assume!(size > 1);
        let p = partition_dataset(n, size, size / 2, seed).unwrap();
        let mut seen = vec![0u8; n];
        for s in [&p.train_target, &p.test_target, &p.train_shadow, &p.test_shadow, &p.unused] {
            for &i in s.iter() {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert_eq!(p.unused.len(), n - 4 * size);
        prop_assert_eq!(&p, &partition_dataset(n, size, size / 2, seed).unwrap());
    }
}

#[test]
fn linear_sensitivity_matches_the_half_normal_mean() {
    let model = linear_model(5, 3, 7);
    let zero = vec![0.0; 5];
    let r0 = logits(&model, &zero);
    // Jacobian columns read off unit inputs
    let mut jac = vec![vec![0.0; 5]; 3];
    for j in 0..5 {
        let mut e = zero.clone();
        e[j] = 1.0;
        for (i, v) in logits(&model, &e).iter().enumerate() {
            jac[i][j] = v - r0[i];
        }
    }
    let cfg = FeatureConfig {
        epsilon: 1e-3,
        n_noise: 40_000,
        output: OutputMode::Logits,
    };
    let x = [0.3, -0.2, 0.9, 0.0, 0.5];
    let f = extract_features(&model, &x, 0, &cfg, 1).unwrap();
    for (i, row) in jac.iter().enumerate() {
        let expected = row.iter().map(|v| v * v).sum::<f64>().sqrt() * (2.0 / std::f64::consts::PI).sqrt();
        let rel = (f.sensitivity[i] - expected).abs() / expected;
        // standard error of the mean is about 0.4% at this sample count
        assert!(rel < 0.02, "class {i}: {} vs {expected}", f.sensitivity[i]);
    }
}

#[test]
fn linear_sensitivity_is_independent_of_epsilon() {
    let model = linear_model(4, 3, 2);
    let x = [0.1, 0.2, -0.4, 1.0];
    let base = FeatureConfig {
        epsilon: 1e-3,
        n_noise: 10,
        output: OutputMode::Logits,
    };
    let a = extract_features(&model, &x, 1, &base, 9).unwrap();
    let b = extract_features(&model, &x, 1, &FeatureConfig { epsilon: 2e-3, ..base }, 9).unwrap();
    for (u, v) in a.sensitivity.iter().zip(&b.sensitivity) {
        assert!((u - v).abs() <= 1e-8 * u.abs().max(1.0), "{u} vs {v}");
    }
}

#[test]
fn softmax_features_are_well_formed() {
    let model = build_initialized(
        &ArchSpec::Mlp {
            input_shape: vec![6],
            hidden: vec![8],
            classes: 4,
        },
        3,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for seed in 0..20 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = extract_features(&model, &x, 2, &FeatureConfig::default(), seed).unwrap();
        assert_eq!(f.label, 2);
        assert!((f.prediction.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(f.sensitivity.iter().all(|&s| s >= 0.0 && s.is_finite()));
        assert_eq!(f, extract_features(&model, &x, 2, &FeatureConfig::default(), seed).unwrap());
    }
    let bad = FeatureConfig {
        epsilon: 0.0,
        ..FeatureConfig::default()
    };
    assert!(extract_features(&model, &[0.0; 6], 0, &bad, 0).is_err());
}

fn toy_data() -> ImageDataset {
    gen_synthetic(
        &SyntheticSpec {
            count: 80,
            classes: 3,
            sample_shape: vec![6],
            separation: 1.0,
        },
        5,
    )
    .unwrap()
}

#[test]
fn attack_dataset_is_balanced_and_batch_independent() {
    let data = toy_data();
    let model = linear_model(6, 3, 1);
    let members: Vec<usize> = (0..20).collect();
    let non: Vec<usize> = (40..60).collect();
    let cfg = FeatureConfig::default();
    let set = build_attack_dataset(&model, &data, &members, &non, &cfg, 4).unwrap();
    assert_eq!(set.len(), 40);
    assert_eq!(set.members().iter().filter(|&&m| m).count(), 20);
    assert_eq!(set.feature_width(), 9);
    let fm = set.feature_matrix();
    assert_eq!(fm.shape(), &[40, 9]);
    // one-hot label block
    for (r, ex) in set.examples.iter().enumerate() {
        let row = fm.row(r);
        assert_eq!(row[..3].iter().sum::<f64>(), 1.0);
        assert_eq!(row[ex.label], 1.0);
        assert_eq!(&row[3..6], ex.prediction.as_slice());
    }
    // a point's features do not depend on its neighbours
    let alone = build_attack_dataset(&model, &data, &members[5..6], &non[..1], &cfg, 4).unwrap();
    assert_eq!(alone.examples[0], set.examples[5]);

    let mut tsv = Vec::new();
    set.write_tsv(&mut tsv).unwrap();
    let text = String::from_utf8(tsv).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert_eq!(text.lines().next().unwrap().split('\t').count(), 8);

    assert!(build_attack_dataset(&model, &data, &members, &non[..5], &cfg, 4).is_err());
    assert!(build_attack_dataset(&model, &data, &members, &members, &cfg, 4).is_err());
    assert!(build_attack_dataset(&model, &data, &[], &[], &cfg, 4).is_err());
    assert!(build_attack_dataset(&model, &data, &[500], &[1], &cfg, 4).is_err());
}

/// Examples whose features carry no membership signal except, optionally,
/// one prediction coordinate equal to the membership bit.
fn synthetic_set(n: usize, leak: bool, seed: u64) -> AttackSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| {
            let member = i % 2 == 0;
            let mut prediction: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            if leak {
                prediction[0] = if member { 1.0 } else { 0.0 };
            }
            AttackExample {
                label: rng.random_range(0..3),
                prediction,
                sensitivity: (0..3).map(|_| rng.random_range(0.0..1.0)).collect(),
                member,
            }
        })
        .collect();
    AttackSet { classes: 3, examples }
}

#[test]
fn separable_features_are_learned_by_every_discriminator() {
    let set = synthetic_set(4096, true, 1);
    let discs = train_discriminators(&set, &paper_grid(), 3).unwrap();
    assert_eq!(discs.len(), 9);
    for d in &discs {
        let acc = attack_accuracy(d, &set).unwrap();
        assert!(acc >= 99.0, "{:?}: {acc}", d.spec);
    }
}

#[test]
fn null_features_give_chance_accuracy_on_held_out_points() {
    let mut means = Vec::new();
    for seed in 0..3 {
        let shadow = synthetic_set(512, false, 10 + seed);
        let target = synthetic_set(512, false, 20 + seed);
        let discs = train_discriminators(&shadow, &paper_grid(), seed).unwrap();
        let accs: Vec<f64> = discs.iter().map(|d| attack_accuracy(d, &target).unwrap()).collect();
        means.push(accs.iter().sum::<f64>() / accs.len() as f64);
    }
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    assert!((mean - 50.0).abs() <= 5.0, "{means:?}");
}

#[test]
fn discriminator_training_is_deterministic() {
    let set = synthetic_set(64, true, 2);
    let spec = DiscriminatorSpec {
        epochs: 3,
        ..paper_grid()[0].clone()
    };
    let a = train_discriminator(&set, &spec, 5).unwrap();
    let b = train_discriminator(&set, &spec, 5).unwrap();
    assert_eq!(a.model.state(), b.model.state());
    assert_eq!(
        a.predict_proba(&set.feature_matrix()).unwrap(),
        b.predict_proba(&set.feature_matrix()).unwrap()
    );
}

#[test]
fn untrained_models_leak_little() {
    let data = gen_synthetic(
        &SyntheticSpec {
            count: 400,
            classes: 2,
            sample_shape: vec![8],
            separation: 1.0,
        },
        3,
    )
    .unwrap();
    let p = partition_dataset(400, 100, 0, 1).unwrap();
    let arch = ArchSpec::Mlp {
        input_shape: vec![8],
        hidden: vec![8],
        classes: 2,
    };
    let target = build_initialized(&arch, 1).unwrap();
    let shadow = build_initialized(&arch, 2).unwrap();
    let cfg = AttackConfig {
        features: FeatureConfig::default(),
        grid: paper_grid().into_iter().map(|s| DiscriminatorSpec { epochs: 20, ..s }).collect(),
    };
    let r = evaluate_attack(&target, &shadow, &data, &p, &cfg, 0).unwrap();
    assert_eq!(r.grid.len(), 9);
    assert_eq!(r.target_examples, 200);
    let max = r.grid.iter().map(|g| g.target_accuracy).fold(f64::MIN, f64::max);
    assert_eq!(r.attack_accuracy, max);
    assert_eq!(r.defense, defense_score(max));
    assert!(r.attack_accuracy < 62.0, "{}", r.attack_accuracy);
    assert_eq!(r, evaluate_attack(&target, &shadow, &data, &p, &cfg, 0).unwrap());
}
