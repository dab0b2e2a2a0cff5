use geoaug::eval::{
    auroc, binary_auroc, f1_and_confusion, pgd_attack, train_softmax, AttackSpec, ClassifierModel,
    TrainHyper,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(d: usize, k: usize, seed: u64) -> ClassifierModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ClassifierModel {
        weights: Array2::from_shape_fn((k, d), |_| rng.random_range(-1.0..1.0)),
        bias: Array1::from_shape_fn(k, |_| rng.random_range(-0.5..0.5)),
        mean: Array1::zeros(d),
        std: Array1::ones(d),
    }
}

fn labelled(n: usize, k: usize) -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
    (prop::collection::vec(0.0f64..1.0, n * k), prop::collection::vec(0..k, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pgd_stays_in_the_ball(seed in 0u64..1000, eps in 0.0f64..0.5, steps in 1usize..6) {
        let m = model(5, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let z = Array2::from_shape_fn((12, 5), |_| rng.random_range(-2.0..2.0));
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let spec = AttackSpec { epsilon: eps, steps, step_size: eps / 2.0 + 1e-3, random_start: seed % 2 == 0, seed };
        let adv = pgd_attack(&m, &z, &y, &spec).unwrap();
        for (a, o) in adv.iter().zip(z.iter()) {
            prop_assert!((a - o).abs() <= eps);
        }
        let clean = m.sample_losses(&z, &y);
        let attacked = m.sample_losses(&adv, &y);
        for (c, a) in clean.iter().zip(&attacked) {
            prop_assert!(a >= c);
        }
    }

    #[test]
    fn auroc_ignores_monotone_transforms((s, y) in labelled(30, 3)) {
        let scores = Array2::from_shape_vec((30, 3), s).unwrap();
        let (per, mac) = auroc(&scores, &y).unwrap();
        let warped = scores.mapv(|v| (3.0 * v).exp() - 7.0);
        let (per2, mac2) = auroc(&warped, &y).unwrap();
        prop_assert_eq!(per, per2);
        prop_assert_eq!(mac, mac2);
    }

    #[test]
    fn macro_is_mean_of_defined((s, y) in labelled(20, 3)) {
        let scores = Array2::from_shape_vec((20, 3), s).unwrap();
        let (per, mac) = auroc(&scores, &y).unwrap();
        let defined: Vec<f64> = per.iter().flatten().copied().collect();
        if defined.is_empty() {
            prop_assert!(mac.is_none());
        } else {
            let mean = defined.iter().sum::<f64>() / defined.len() as f64;
            prop_assert!((mac.unwrap() - mean).abs() <= 1e-12);
        }
        let pred: Vec<usize> = (0..20).map(|i| (0..3).max_by(|&a, &b| scores[[i, a]].total_cmp(&scores[[i, b]])).unwrap()).collect();
        let (f1, mf1, conf) = f1_and_confusion(&pred, &y, 3).unwrap();
        prop_assert!((mf1 - f1.iter().sum::<f64>() / 3.0).abs() <= 1e-12);
        for c in 0..3 {
            prop_assert_eq!(conf[c].iter().sum::<usize>(), y.iter().filter(|&&t| t == c).count());
        }
    }
}

#[test]
fn auroc_hand_case_with_tie() {
    let y = [1, 1, 0, 0];
    assert_eq!(binary_auroc(vec![0.9, 0.8, 0.7, 0.8], &y, 1), Some(0.875));
}

#[test]
fn training_loss_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Array2::from_shape_fn((60, 4), |(i, j)| rng.random_range(-1.0..1.0) + if j == i % 3 { 2.0 } else { 0.0 });
    let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let (_, losses) = geoaug::eval::train_softmax_logged(&x, &y, 3, &TrainHyper { seed: 1, ..TrainHyper::default() }).unwrap();
    assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let m = train_softmax(&x, &y, 3, &TrainHyper { seed: 1, ..TrainHyper::default() }).unwrap();
    let m2 = train_softmax(&x, &y, 3, &TrainHyper { seed: 1, ..TrainHyper::default() }).unwrap();
    assert_eq!(m, m2);
}
