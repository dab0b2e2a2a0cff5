use geoaug::augment::{geodesic_augment, AugmentSpec, LabelPolicy, Pairing};
use geoaug::metric::{beat_distance, to_density};
use geoaug::signal::{synth_beat, LeadWaves, SynthBeatParams};
use geoaug::{BeatTensor, ClassId};
use proptest::prelude::*;

fn pool(class: ClassId, n: usize, centre: f64, seed: u64) -> Vec<BeatTensor> {
    (0..n)
        .map(|k| {
            let c = centre + 0.01 * (k % 7) as f64;
            synth_beat(&SynthBeatParams {
                leads: vec![
                    LeadWaves::qrs_only(1.0, c, 0.015),
                    LeadWaves::sinus().shifted(c).scaled(0.7),
                ],
                beat_len: 100,
                sample_rate: 100.0,
                noise_sigma: 0.0,
                seed: seed + k as u64,
                label: class,
                source_id: format!("{class}-{k}"),
            })
            .unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn labels_and_validity(
        seed in 0u64..1000,
        n in 1usize..20,
        source_policy in any::<bool>(),
        argmax in any::<bool>(),
    ) {
        let src = pool(ClassId::NORM, 12, 0.3, seed);
        let tgt = pool(ClassId::MI, 9, 0.5, seed + 100);
        let mut spec = AugmentSpec::new(ClassId::NORM, ClassId::MI, n, seed);
        spec.batch_source = 5;
        spec.batch_target = 4;
        if source_policy {
            spec.label_policy = LabelPolicy::Source;
        }
        if argmax {
            spec.pairing = Pairing::RowArgmax;
        }
        let out = geodesic_augment(&src, &tgt, &spec).unwrap();
        prop_assert_eq!(out.len(), n);
        let want = if source_policy { ClassId::NORM } else { ClassId::MI };
        for b in &out {
            prop_assert_eq!(b.label, want);
            prop_assert!(b.same_shape(&src[0]));
            for lead in b.leads() {
                let d = to_density(lead).unwrap();
                prop_assert!((d.mass().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
        prop_assert_eq!(out, geodesic_augment(&src, &tgt, &spec).unwrap());
    }
}

#[test]
fn augmented_beats_lie_on_the_geodesic() {
    // singleton pools fix the pairing
    let src = pool(ClassId::NORM, 1, 0.3, 1);
    let tgt = pool(ClassId::MI, 1, 0.6, 2);
    let full = beat_distance(&src[0], &tgt[0]).unwrap();
    for alpha in [0.3, 0.5, 0.8] {
        let mut spec = AugmentSpec::new(ClassId::NORM, ClassId::MI, 1, 0);
        spec.alpha_min = alpha;
        spec.alpha_max = alpha;
        let out = geodesic_augment(&src, &tgt, &spec).unwrap();
        let ratio = beat_distance(&src[0], &out[0]).unwrap() / full;
        assert!((ratio / (alpha * alpha) - 1.0).abs() <= 0.1, "alpha {alpha}: {ratio}");
    }
}
