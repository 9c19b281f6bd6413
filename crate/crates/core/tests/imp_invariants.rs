use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_mia::data::{gen_synthetic, SyntheticSpec};
use sparse_mia::imp::*;
use sparse_mia::nn::{build_initialized, ArchSpec, Model, TrainConfig};

fn arch() -> ArchSpec {
    ArchSpec::Mlp {
        input_shape: vec![6],
        hidden: vec![20, 10],
        classes: 3,
    }
}

fn prunable(model: &Model) -> Vec<(bool, f64)> {
    model
        .params()
        .into_iter()
        .filter(|(_, p)| p.prunable)
        .flat_map(|(_, p)| (0..p.len()).map(move |i| (p.is_kept(i), p.value.data()[i])))
        .collect()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        initial_lr: 0.05,
        momentum: 0.9,
        weight_decay: 5e-4,
        lr_drop_epochs: vec![],
        lr_drop_factor: 0.1,
        seed: 3,
        augment: Default::default(),
    }
}

#[test]
fn sparsity_follows_the_geometric_law() {
    let mut m = build_initialized(&arch(), 1).unwrap();
    let total = prunable(&m).len();
    // independent recurrence: each round keeps s − ⌊0.2 s⌋
    let mut expected = total;
    for k in 1..=6 {
        global_magnitude_prune(&mut m, 0.2).unwrap();
        expected -= expected / 5;
        let surviving = prunable(&m).iter().filter(|(k, _)| *k).count();
        assert_eq!(surviving, expected);
        let ideal = 0.8f64.powi(k) * total as f64;
        // flooring keeps under one extra weight per round, geometrically damped
        assert!((surviving as f64 - ideal).abs() < 4.0, "k={k}: {surviving} vs {ideal}");
    }
}

#[test]
fn imp_run_keeps_masks_monotone_and_pruned_weights_zero() {
    let data = gen_synthetic(
        &SyntheticSpec {
            count: 120,
            classes: 3,
            sample_shape: vec![6],
            separation: 2.0,
        },
        4,
    )
    .unwrap();
    let (train, val) = (data.subset(&(0..90).collect::<Vec<_>>()).unwrap(), data.subset(&(90..120).collect::<Vec<_>>()).unwrap());
    let mut m = build_initialized(&arch(), 2).unwrap();
    let cfg = ImpConfig {
        rounds: 3,
        prune_fraction: 0.2,
        train: config(3),
    };
    let rounds = imp_run(&mut m, &train, Some(&val), Some(&val), &cfg).unwrap();
    assert_eq!(rounds.len(), 4);
    let expected = [1.0, 0.8, 0.64, 0.512];
    for (r, e) in rounds.iter().zip(expected) {
        assert!((r.surviving_fraction - e).abs() < 0.01, "{} vs {e}", r.surviving_fraction);
        assert!(prunable(&r.model).iter().all(|&(kept, v)| kept || v == 0.0));
        assert!(r.test_accuracy.is_some());
    }
    for pair in rounds.windows(2) {
        assert!(pair[1].mask.is_subset_of(&pair[0].mask));
    }
    let again = imp_run(&mut build_initialized(&arch(), 2).unwrap(), &train, Some(&val), Some(&val), &cfg).unwrap();
    for (a, b) in rounds.iter().zip(&again) {
        assert_eq!(a.model.state(), b.model.state());
    }

    let dir = tempfile::tempdir().unwrap();
    let manifest = write_round_checkpoints(&rounds, dir.path()).unwrap();
    assert_eq!(manifest.len(), 4);
    for e in &manifest {
        assert!(dir.path().join(&e.file).exists());
        assert!(e.file.starts_with(&format!("round_{:02}_", e.round)));
    }
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let parsed: Vec<ManifestEntry> = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, manifest);
}

#[test]
fn zero_rounds_is_a_single_dense_record() {
    let data = gen_synthetic(
        &SyntheticSpec {
            count: 30,
            classes: 3,
            sample_shape: vec![6],
            separation: 1.0,
        },
        0,
    )
    .unwrap();
    let mut m = build_initialized(&arch(), 0).unwrap();
    let cfg = ImpConfig {
        rounds: 0,
        prune_fraction: 0.2,
        train: config(1),
    };
    let r = imp_run(&mut m, &data, None, None, &cfg).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].surviving_fraction, 1.0);
    assert_eq!(r[0].nonzero_pct, 100.0);
}

#[test]
fn rewind_is_bit_exact_and_respects_new_masks() {
    let mut m = build_initialized(&arch(), 5).unwrap();
    let snap = Snapshot::capture(&m, 4, Some(50.0));
    rewind(&mut m, &snap).unwrap();
    assert_eq!(m.state(), snap.state);

    for (_, p) in m.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v += 1.0);
    }
    rewind(&mut m, &snap).unwrap();
    let bits = |s: &sparse_mia::nn::ModelState| -> Vec<u64> {
        s.tensors.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&m.state()), bits(&snap.state));

    {
        let mut params = m.params_mut();
        let w = &mut params[0].1;
        let mut mask = vec![true; w.len()];
        mask[7] = false;
        w.mask = Some(mask);
    }
    rewind(&mut m, &snap).unwrap();
    let (a, b) = (bits(&m.state()), bits(&snap.state));
    let differing: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
    assert_eq!(differing, vec![7]);

    let other = build_initialized(
        &ArchSpec::Mlp {
            input_shape: vec![6],
            hidden: vec![5],
            classes: 3,
        },
        0,
    )
    .unwrap();
    assert!(rewind(&mut m, &Snapshot::capture(&other, 0, None)).is_err());
}

#[test]
fn train_to_best_returns_the_best_epoch_weights() {
    let data = gen_synthetic(
        &SyntheticSpec {
            count: 60,
            classes: 3,
            sample_shape: vec![6],
            separation: 1.5,
        },
        8,
    )
    .unwrap();
    let val = data.subset(&(0..20).collect::<Vec<_>>()).unwrap();
    let mut m = build_initialized(&arch(), 1).unwrap();
    let (hist, best) = train_to_best(&mut m, &data, Some(&val), &config(8)).unwrap();
    let accs: Vec<f64> = hist.iter().map(|h| h.val_accuracy.unwrap()).collect();
    let max = accs.iter().cloned().fold(f64::MIN, f64::max);
    let first = accs.iter().position(|&a| a == max).unwrap();
    assert_eq!(best.epoch, first);
    assert_eq!(m.state(), best.state);
    assert_eq!(sparse_mia::nn::evaluate_accuracy(&m, &val).unwrap(), max);
}

proptest! {
    #[test]
    fn pruned_magnitudes_never_exceed_survivors(seed in any::<u64>(), fraction in 0.05f64..0.95) {
        let mut m = build_initialized(&arch(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // coarse values force magnitude ties across tensors
        for (_, p) in m.params_mut() {
            for v in p.value.data_mut() {
                *v = f64::from(rng.random_range(-4i32..=4)) / 4.0;
            }
        }
        let before: Vec<f64> = prunable(&m).iter().map(|&(_, v)| v).collect();
        global_magnitude_prune(&mut m, fraction).unwrap();
        let after = prunable(&m);
        let max_pruned = after.iter().zip(&before).filter(|((k, _), _)| !k).map(|(_, v)| v.abs()).fold(0.0, f64::max);
        let min_kept = after.iter().zip(&before).filter(|((k, _), _)| *k).map(|(_, v)| v.abs()).fold(f64::INFINITY, f64::min);
        prop_assert!(max_pruned <= min_kept);
        let removed = after.iter().filter(|(k, _)| !k).count();
        prop_assert_eq!(removed, (fraction * before.len() as f64).floor() as usize);
    }
}
