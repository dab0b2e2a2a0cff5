use geoaug::bench::{generate_benchmark, BenchmarkSpec};
use geoaug::experiment::{load_model, run_experiment, save_model, write_experiment, AugmentMode, ModelFile};
use geoaug::io::{
    cached_pairwise, cost_digest, load_beats, load_cost_cache, save_beats, RunConfig,
};
use geoaug::metric::ShapeMetric;
use geoaug::ClassId;

fn small(seed: u64) -> Vec<geoaug::BeatTensor> {
    let spec = BenchmarkSpec {
        classes: vec![(ClassId::NORM, 60), (ClassId::MI, 15), (ClassId::STTC, 15)],
        n_leads: 2,
        ..BenchmarkSpec::imbalanced(seed)
    };
    generate_benchmark(&spec).unwrap()
}

fn quick_config() -> RunConfig {
    RunConfig { epochs: 40, epsilons: vec![0.01, 0.1], ..RunConfig::default() }
}

#[test]
fn cache_is_reused_only_while_inputs_match() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("costs.wcst");
    let beats = small(1);
    let (a, b) = (&beats[..6], &beats[60..64]);
    let metric = ShapeMetric::default();
    let (first, hit) = cached_pairwise(&path, a, b, &metric).unwrap();
    assert!(!hit);
    let (second, hit) = cached_pairwise(&path, a, b, &metric).unwrap();
    assert!(hit);
    assert_eq!(first.matrix(), second.matrix());
    // a different batch invalidates the file, which is then rewritten
    let other = &beats[10..16];
    assert!(load_cost_cache(&path, &cost_digest(other, b, &metric).unwrap()).unwrap().is_none());
    let (_, hit) = cached_pairwise(&path, other, b, &metric).unwrap();
    assert!(!hit);
    assert!(load_cost_cache(&path, &cost_digest(other, b, &metric).unwrap()).unwrap().is_some());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1, "temporary files left behind");
}

#[test]
fn reports_carry_seed_and_config_hash() {
    let cfg = quick_config();
    let beats = small(2);
    let out = run_experiment(&cfg, &beats, AugmentMode::Geodesic).unwrap();
    assert_eq!(out.report.seed, cfg.seed);
    assert_eq!(out.report.config_hash, cfg.hash());
    assert_eq!(out.report.robustness.len(), 2);
    assert!(out.augmented.iter().all(|b| b.source_id.starts_with("geo:")));

    let dir = tempfile::tempdir().unwrap();
    write_experiment(dir.path(), &out).unwrap();
    let text = std::fs::read_to_string(dir.path().join("report_geodesic.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["mode"], "geodesic");
    let aug = load_beats(&dir.path().join("augmented_geodesic.ecgb")).unwrap();
    assert_eq!(aug.len(), out.augmented.len());
}

#[test]
fn augmented_beats_never_reach_the_test_split() {
    let cfg = quick_config();
    let beats = small(3);
    let digests: Vec<String> = AugmentMode::ALL
        .iter()
        .map(|&m| run_experiment(&cfg, &beats, m).unwrap().report.test_digest)
        .collect();
    assert!(digests.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn model_and_beat_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let beats = small(4);
    let p = dir.path().join("b.ecgb");
    save_beats(&p, &beats).unwrap();
    assert_eq!(load_beats(&p).unwrap().len(), beats.len());

    let cfg = quick_config();
    let out = run_experiment(&cfg, &beats, AugmentMode::None).unwrap();
    let mf = ModelFile {
        classes: out.report.classes.clone(),
        features: geoaug::experiment::feature_config_for(&beats, &cfg).unwrap(),
        model: out.model.clone(),
    };
    let mp = dir.path().join("model.json");
    save_model(&mp, &mf).unwrap();
    assert_eq!(load_model(&mp).unwrap(), mf);
}
