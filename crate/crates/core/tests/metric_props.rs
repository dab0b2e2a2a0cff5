use geoaug::metric::{pairwise_cost, quantile_interpolate, to_density, w2_1d, beat_distance};
use geoaug::signal::{synth_beat, LeadWaves, SynthBeatParams};
use geoaug::{BeatTensor, ClassId, DensityOnGrid};
use proptest::prelude::*;

const G: usize = 40;

fn density() -> impl Strategy<Value = DensityOnGrid> {
    prop::collection::vec(0.01f64..1.0, G).prop_map(|w| DensityOnGrid::from_weights(&w).unwrap())
}

/// Floor plus one to three Gaussian bumps; the kind of shape a beat lead
/// turns into.
fn smooth_density() -> impl Strategy<Value = DensityOnGrid> {
    prop::collection::vec((0.1f64..0.9, 0.06f64..0.2, 0.2f64..1.0), 1..=3).prop_map(|bumps| {
        let w: Vec<f64> = (0..50)
            .map(|i| {
                let t = i as f64 / 49.0;
                0.05 + bumps.iter().map(|(c, s, a)| a * (-0.5 * ((t - c) / s).powi(2)).exp()).sum::<f64>()
            })
            .collect();
        DensityOnGrid::from_weights(&w).unwrap()
    })
}

/// A bump of fixed shape whose centre sits `cells` grid cells in.
fn bump_at(cells: usize) -> DensityOnGrid {
    let w: Vec<f64> = (0..G)
        .map(|i| {
            let d = i as f64 - cells as f64;
            1e-9 + (-0.5 * d * d).exp()
        })
        .collect();
    DensityOnGrid::from_weights(&w).unwrap()
}

fn beat(center_s: f64, seed: u64) -> BeatTensor {
    synth_beat(&SynthBeatParams {
        leads: vec![LeadWaves::qrs_only(1.0, center_s, 0.012), LeadWaves::sinus().shifted(0.4)],
        beat_len: 100,
        sample_rate: 100.0,
        noise_sigma: 0.01,
        seed,
        label: ClassId::NORM,
        source_id: format!("b{seed}"),
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w2_symmetric_nonnegative(mu in density(), nu in density()) {
        let d = w2_1d(&mu, &nu);
        prop_assert!(d >= 0.0);
        prop_assert!((d - w2_1d(&nu, &mu)).abs() <= 1e-12);
        prop_assert!(w2_1d(&mu, &mu) == 0.0);
    }

    #[test]
    fn w2_root_triangle(a in density(), b in density(), c in density()) {
        let ab = w2_1d(&a, &b).sqrt();
        let bc = w2_1d(&b, &c).sqrt();
        let ac = w2_1d(&a, &c).sqrt();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn displacement_scaling(mu in smooth_density(), nu in smooth_density(), k in 1usize..4) {
        let alpha = 0.25 * k as f64;
        let full = w2_1d(&mu, &nu);
        prop_assume!(full > 1e-6);
        let part = w2_1d(&mu, &quantile_interpolate(&mu, &nu, alpha).unwrap());
        prop_assert!((part / full - alpha * alpha).abs() <= 1e-3 * alpha * alpha, "{} vs {}", part / full, alpha * alpha);
    }

    #[test]
    fn translation(a in 8usize..16, s in 1usize..10, t in 0usize..6) {
        let h = 1.0 / (G - 1) as f64;
        // the same shift applied to both leaves the cost unchanged
        let base = w2_1d(&bump_at(a), &bump_at(a + s));
        let moved = w2_1d(&bump_at(a + t), &bump_at(a + s + t));
        prop_assert!((base - moved).abs() <= 1e-6 * base);
        // shifting one copy of a shape costs exactly the squared shift
        let expect = (s as f64 * h).powi(2);
        prop_assert!((base - expect).abs() <= 1e-3 * expect, "{base} vs {expect}");
    }

    #[test]
    fn density_invariants(x in prop::collection::vec(-5.0f64..5.0, 8..64)) {
        let d = to_density(&x).unwrap();
        let sum: f64 = d.mass().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(d.mass().iter().all(|&m| m > 0.0));
    }
}

#[test]
fn pairwise_is_symmetric_with_zero_diagonal() {
    let batch: Vec<BeatTensor> = (0..5).map(|k| beat(0.3 + 0.05 * k as f64, k)).collect();
    let c = pairwise_cost(&batch, &batch).unwrap();
    let m = c.matrix();
    for i in 0..5 {
        assert_eq!(m[[i, i]], 0.0);
        for j in 0..5 {
            assert!(m[[i, j]] >= 0.0);
            assert!((m[[i, j]] - m[[j, i]]).abs() <= 1e-12);
        }
    }
}

#[test]
fn pairwise_matches_per_pair_recompute() {
    let a: Vec<BeatTensor> = (0..4).map(|k| beat(0.3 + 0.04 * k as f64, k)).collect();
    let b: Vec<BeatTensor> = (0..5).map(|k| beat(0.35 + 0.03 * k as f64, 10 + k)).collect();
    let c = pairwise_cost(&a, &b).unwrap();
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            assert_eq!(c.matrix()[[i, j]], beat_distance(x, y).unwrap());
        }
    }
}
