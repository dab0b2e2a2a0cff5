//! Acceptance checks, one line each. Run with
//! `cargo test -p geoaug --test acceptance`; exits non-zero on any FAIL.

use std::time::Instant;

use geoaug::augment::{geodesic_augment, linear_mixup, AugmentSpec};
use geoaug::bench::{generate_benchmark, BenchmarkSpec};
use geoaug::experiment::{run_experiment, AugmentMode};
use geoaug::features::{assemble_vector, FeatureConfig};
use geoaug::io::{summarize_counts, RunConfig};
use geoaug::metric::{beat_distance, quantile_interpolate, w2_1d};
use geoaug::ot::{exact_ot, sinkhorn, CostMatrix, DiscreteMeasure, Lambda, MetricTag, SinkhornParams};
use geoaug::signal::{
    detect_r_peaks, dominant_peaks, notch_filter, synth_beat, synth_record, Bump, LeadWaves,
    NotchSpec, SynthBeatParams, SynthRecordParams,
};
use geoaug::{BeatTensor, ClassId, DensityOnGrid, Result};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn rel_err(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs().max(1e-12)
}

fn ot_oracle() -> Result<Outcome> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = SinkhornParams {
        lambda: Lambda::RelativeToMaxCost(1e-3),
        max_iter: 200_000,
        ..SinkhornParams::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (n, m) = (rng.random_range(2..=16), rng.random_range(2..=16));
        let c: Vec<f64> = (0..n * m).map(|_| rng.random_range(0.0..1.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let cost = CostMatrix::new(Array2::from_shape_vec((n, m), c).unwrap(), MetricTag::SquaredGrid)?;
        let (a, b) = (DiscreteMeasure::from_weights(&a)?, DiscreteMeasure::from_weights(&b)?);
        let exact = exact_ot(&cost, &a, &b)?;
        let approx = sinkhorn(&cost, &a, &b, &params)?;
        worst = worst.max(rel_err(approx.cost, exact.cost));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-2 && secs < 60.0,
        format!("50 instances, worst relative error {worst:.2e}, {secs:.1} s"),
    )
}

/// Smooth positive density: floor plus a few Gaussian bumps centred in
/// `centres`.
fn bump_density(rng: &mut ChaCha8Rng, grid: usize, centres: std::ops::Range<f64>) -> Result<DensityOnGrid> {
    let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=3))
        .map(|_| {
            (rng.random_range(centres.clone()), rng.random_range(0.06..0.2), rng.random_range(0.2..1.0))
        })
        .collect();
    let w: Vec<f64> = (0..grid)
        .map(|i| {
            let t = i as f64 / (grid - 1) as f64;
            0.05 + bumps.iter().map(|(c, s, a)| a * (-0.5 * ((t - c) / s).powi(2)).exp()).sum::<f64>()
        })
        .collect();
    DensityOnGrid::from_weights(&w)
}

fn closed_form_1d() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cost = CostMatrix::squared_grid(50);
    let params = SinkhornParams { lambda: Lambda::Absolute(1e-3), max_iter: 200_000, ..SinkhornParams::default() };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        // far-apart pairs: the entropic cost sits about lambda/2 above the
        // true one, which only vanishes in relative terms for large costs
        let (mu, nu) = (bump_density(&mut rng, 50, 0.1..0.33)?, bump_density(&mut rng, 50, 0.67..0.9)?);
        let a = DiscreteMeasure::from_weights(mu.mass())?;
        let b = DiscreteMeasure::from_weights(nu.mass())?;
        let s = sinkhorn(&cost, &a, &b, &params)?;
        worst = worst.max(rel_err(w2_1d(&mu, &nu), s.cost));
    }
    outcome(worst <= 1e-2, format!("20 pairs on 50 nodes, worst relative error {worst:.2e}"))
}

fn displacement_identity() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (mu, nu) = (bump_density(&mut rng, 50, 0.1..0.9)?, bump_density(&mut rng, 50, 0.1..0.9)?);
        let full = w2_1d(&mu, &nu);
        for alpha in [0.25, 0.5, 0.75] {
            let mid = quantile_interpolate(&mu, &nu, alpha)?;
            worst = worst.max(rel_err(w2_1d(&mu, &mid), alpha * alpha * full));
        }
    }
    outcome(worst <= 1e-3, format!("60 interpolants, worst relative error {worst:.2e}"))
}

fn tone_gain(freq: f64, fs: f64) -> Result<f64> {
    let n = (10.0 * fs) as usize;
    let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin()).collect();
    let y = notch_filter(&x, &NotchSpec::powerline(fs))?;
    // amplitude from the middle half, away from edge transients
    let mid = n / 4..3 * n / 4;
    let rms = |v: &[f64]| (v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64).sqrt();
    Ok(rms(&y[mid.clone()]) / rms(&x[mid]))
}

fn notch() -> Result<Outcome> {
    let fs = 500.0;
    let g50 = tone_gain(50.0, fs)?;
    let g5 = tone_gain(5.0, fs)?;
    let dc = notch_filter(&vec![0.7; 5000], &NotchSpec::powerline(fs))?;
    let dc_err = dc.iter().map(|v| (v - 0.7).abs()).fold(0.0, f64::max);
    let db = 20.0 * g50.log10();
    outcome(
        db <= -30.0 && (g5 - 1.0).abs() <= 0.01 && dc_err <= 1e-6,
        format!("50 Hz {db:.1} dB, 5 Hz gain {g5:.5}, DC error {dc_err:.1e}"),
    )
}

fn r_peaks() -> Result<Outcome> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for bpm in [60.0, 75.0, 100.0] {
        for seed in 0..20 {
            let mut p = SynthRecordParams::sinus(1, bpm, seed);
            p.leads = vec![LeadWaves::sinus()];
            p.noise_sigma = 0.05;
            let (rec, truth) = synth_record(&p)?;
            let found = detect_r_peaks(rec.lead(0), rec.sample_rate)?;
            let mut used = vec![false; found.len()];
            for &t in &truth {
                match (0..found.len()).find(|&k| !used[k] && found[k].abs_diff(t) <= 3) {
                    Some(k) => {
                        used[k] = true;
                        tp += 1;
                    }
                    None => fn_ += 1,
                }
            }
            fp += used.iter().filter(|u| !**u).count();
        }
    }
    outcome(
        fp == 0 && fn_ == 0,
        format!("60 records, {tp} true, {fp} false positives, {fn_} missed"),
    )
}

const FS: f64 = 250.0;
const LEN: usize = 250;

fn one_lead(waves: LeadWaves, label: ClassId, id: String) -> Result<BeatTensor> {
    synth_beat(&SynthBeatParams {
        leads: vec![waves],
        beat_len: LEN,
        sample_rate: FS,
        noise_sigma: 0.0,
        seed: 0,
        label,
        source_id: id,
    })
}

fn peak_counts() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut geo_single, mut lin_double) = (0, 0);
    for k in 0..100 {
        let width = rng.random_range(0.008..0.016);
        let c = rng.random_range(0.3..0.6);
        let offset = rng.random_range(0.0..0.1);
        let x = one_lead(LeadWaves::qrs_only(rng.random_range(0.8..1.2), c, width), ClassId::NORM, format!("x{k}"))?;
        let y = one_lead(LeadWaves::qrs_only(rng.random_range(0.8..1.2), c + offset, width), ClassId::MI, format!("y{k}"))?;
        let mut spec = AugmentSpec::new(ClassId::NORM, ClassId::MI, 1, k);
        spec.alpha_min = 0.5;
        spec.alpha_max = 0.5;
        let geo = geodesic_augment(&[x.clone()], &[y.clone()], &spec)?;
        let lin = linear_mixup(&x, &y, 0.5)?;
        if dominant_peaks(geo[0].lead(0), 0.3).len() == 1 {
            geo_single += 1;
        }
        if dominant_peaks(lin.lead(0), 0.3).len() == 2 {
            lin_double += 1;
        }
    }
    outcome(
        geo_single >= 95 && lin_double >= 50,
        format!("geodesic single peak {geo_single}/100, linear two peaks {lin_double}/100"),
    )
}

fn shape_ranking() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut agree = 0;
    for k in 0..50 {
        let width = rng.random_range(0.008..0.014);
        let c = rng.random_range(0.2..0.35);
        let base = LeadWaves::qrs_only(1.0, c, width);
        let shifted = base.shifted(rng.random_range(0.05..0.1));
        // same timing, extra T-like wave
        let mut other = base;
        other.t = Bump::new(rng.random_range(0.4..0.6), c + rng.random_range(0.2..0.35), rng.random_range(0.025..0.04));
        let [x, y, z] = [base, shifted, other].map(|w| one_lead(w, ClassId::NORM, format!("t{k}")));
        let (x, y, z) = (x?, y?, z?);
        let l2 = |a: &BeatTensor, b: &BeatTensor| -> f64 {
            a.samples().iter().zip(b.samples()).map(|(p, q)| (p - q).powi(2)).sum()
        };
        let shape_closer = beat_distance(&x, &y)? < beat_distance(&x, &z)?;
        let l2_farther = l2(&x, &y) > l2(&x, &z);
        if shape_closer && l2_farther {
            agree += 1;
        }
    }
    outcome(agree >= 45, format!("{agree}/50 triplets ranked as expected"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn end_to_end() -> Result<Outcome> {
    let t0 = Instant::now();
    let mut diffs = Vec::new();
    let mut dominated = 0;
    for seed in 0..5 {
        let beats = generate_benchmark(&BenchmarkSpec::imbalanced(seed))?;
        let cfg = RunConfig { seed, ..RunConfig::default() };
        let none = run_experiment(&cfg, &beats, AugmentMode::None)?.report;
        let geo = run_experiment(&cfg, &beats, AugmentMode::Geodesic)?.report;
        diffs.push(geo.clean.f1_macro - none.clean.f1_macro);
        let wins = none
            .robustness
            .iter()
            .zip(&geo.robustness)
            .all(|(n, g)| matches!((n.auroc_macro, g.auroc_macro), (Some(n), Some(g)) if g >= n));
        if wins {
            dominated += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let med = median(diffs.clone());
    let shown: Vec<String> = diffs.iter().map(|d| format!("{d:+.3}")).collect();
    outcome(
        med >= 0.05 && dominated >= 4 && secs < 600.0,
        format!(
            "macro-F1 gain median {med:+.3} [{}], AUROC dominates in {dominated}/5 seeds, {secs:.0} s",
            shown.join(" ")
        ),
    )
}

fn paper_arithmetic() -> Result<Outcome> {
    let samples: Vec<f64> = (0..12 * 100).map(|i| (i as f64 * 0.05).sin()).collect();
    let beat = BeatTensor::new(samples, 12, ClassId::NORM, 100.0, "anchor")?;
    let v = assemble_vector(&beat, &FeatureConfig::paper())?;
    let dims = v.layout.dims();

    let rows = [
        (ClassId::NORM, 9528, 28419),
        (ClassId::MI, 5486, 10959),
        (ClassId::STTC, 5250, 8906),
        (ClassId::CD, 4907, 20955),
        (ClassId::HYP, 2655, 8342),
    ];
    let s = summarize_counts(&rows);
    let patients: Vec<f64> = s.classes.iter().map(|c| c.patient_pct).collect();
    let beats: Vec<f64> = s.classes.iter().map(|c| c.beat_pct).collect();
    let ok = v.len() == 864
        && dims == [600, 156, 108]
        && patients == [34.2, 19.7, 18.9, 17.6, 9.5]
        && beats == [36.6, 14.1, 11.5, 27.0, 10.8];
    outcome(ok, format!("vector {} = {dims:?}; patients % {patients:?}; beats % {beats:?}", v.len()))
}

fn main() {
    type Check = fn() -> Result<Outcome>;
    let checks: [(&str, Check); 9] = [
        ("exact vs entropic transport", ot_oracle),
        ("1-D closed form vs entropic transport", closed_form_1d),
        ("geodesic displacement identity", displacement_identity),
        ("powerline notch", notch),
        ("R-peak detection", r_peaks),
        ("geodesic keeps one peak, mixup splits", peak_counts),
        ("shape metric vs per-sample distance", shape_ranking),
        ("augmentation benefit on the imbalanced benchmark", end_to_end),
        ("feature size and class shares", paper_arithmetic),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for i in 1..=checks.len() {
            println!("C{i}: test");
        }
        return;
    }
    let filter: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let id = format!("C{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| **f == id) {
            continue;
        }
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!("{} {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    println!("acceptance: {} checked, {failed} failed", if filter.is_empty() { checks.len() } else { filter.len() });
    if failed > 0 {
        std::process::exit(1);
    }
}
