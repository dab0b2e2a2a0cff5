use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use geoaug::augment::class_counts;
use geoaug::bench::{generate_benchmark, BenchmarkSpec};
use geoaug::error::StageExt;
use geoaug::eval::{evaluate, robustness_sweep, train_softmax};
use geoaug::experiment::{
    attack_template, augment_train, design_matrix, feature_config_for, load_model, run_experiment,
    save_model, shape_metric, train_hyper, write_experiment, AugmentMode, ModelFile,
};
use geoaug::features::feature_matrix;
use geoaug::io::{
    cached_pairwise, dataset_summary, import_csv, load_beats, load_records, save_beats,
    save_records, write_atomic, LabeledRecord, RunConfig,
};
use geoaug::signal::{
    detect_r_peaks, preprocess_record, segment_beats, synth_record, NotchSpec, SynthRecordParams,
};
use geoaug::{BeatTensor, ClassId, Error, Result};

#[derive(Parser)]
#[command(name = "geoaug", version, about = "Wasserstein-geodesic augmentation for ECG beats")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// The imbalanced 3-class beat benchmark.
    Beats,
    /// Labelled 10 s sinus-rhythm records.
    Records,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    None,
    Oversample,
    Smote,
    Mixup,
    Geodesic,
}

impl From<ModeArg> for AugmentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => AugmentMode::None,
            ModeArg::Oversample => AugmentMode::Oversample,
            ModeArg::Smote => AugmentMode::Smote,
            ModeArg::Mixup => AugmentMode::Mixup,
            ModeArg::Geodesic => AugmentMode::Geodesic,
        }
    }
}

fn parse_class(s: &str) -> std::result::Result<ClassId, String> {
    if let Ok(n) = s.parse::<u32>() {
        return Ok(ClassId(n));
    }
    (0..5)
        .map(ClassId)
        .find(|c| c.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown class `{s}`"))
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "beats")]
        kind: SynthKind,
        /// Records to generate with `--kind records`.
        #[arg(long, default_value_t = 10)]
        records: usize,
        #[arg(long, default_value_t = 12)]
        leads: usize,
    },
    /// Import CSV exports (rows = samples, columns = leads) as records.
    Import {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 12)]
        leads: usize,
        #[arg(long, default_value_t = 100.0)]
        fs: f64,
        #[arg(long, value_parser = parse_class, default_value = "NORM")]
        label: ClassId,
    },
    /// Moving-average smoothing and powerline notch on records.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Detect R peaks and cut fixed windows around them.
    Segment {
        #[command(flatten)]
        common: Common,
        /// Lead used for detection (default: 1 when present, else 0).
        #[arg(long)]
        lead: Option<usize>,
    },
    /// Per-beat feature vectors as JSON.
    Features {
        #[command(flatten)]
        common: Common,
    },
    /// Beat-shape cost matrix, cached by content digest.
    Distmat {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_class)]
        source: Option<ClassId>,
        #[arg(long, value_parser = parse_class)]
        target: Option<ClassId>,
    },
    /// Balance a beat set; writes originals followed by new beats.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "geodesic")]
        mode: ModeArg,
    },
    /// Fit the softmax classifier on a beat set.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// PGD robustness sweep of a trained model.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Clean metrics of a trained model.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Per-class patient and beat counts.
    Summary {
        #[command(flatten)]
        common: Common,
    },
    /// Split, augment, train, evaluate and attack in one go.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "geodesic")]
        mode: ModeArg,
    },
}

fn config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn input(common: &Common) -> Result<&Path> {
    common
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidParam("--in is required".into()))
}

fn output(common: &Common) -> Result<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidParam("--out is required".into()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn beats_or_benchmark(common: &Common, seed: u64) -> Result<Vec<BeatTensor>> {
    match &common.input {
        Some(p) => load_beats(p),
        None => {
            eprintln!("no --in given; using the synthetic benchmark (seed {seed})");
            generate_benchmark(&BenchmarkSpec::imbalanced(seed))
        }
    }
}

#[derive(Serialize)]
struct FeatureFile {
    layout: geoaug::features::FeatureLayout,
    labels: Vec<ClassId>,
    source_ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { common, kind, records, leads } => {
            let cfg = config(&common)?;
            let out = output(&common)?;
            match kind {
                SynthKind::Beats => {
                    let spec = BenchmarkSpec { n_leads: leads, ..BenchmarkSpec::imbalanced(cfg.seed) };
                    let beats = generate_benchmark(&spec)?;
                    save_beats(out, &beats)?;
                    eprintln!("wrote {} beats to {}", beats.len(), out.display());
                }
                SynthKind::Records => {
                    let recs = (0..records)
                        .map(|k| {
                            let bpm = 60.0 + 40.0 * k as f64 / records.max(1) as f64;
                            let mut p = SynthRecordParams::sinus(leads, bpm, cfg.seed.wrapping_add(k as u64));
                            p.record_id = format!("synth-{k:03}");
                            Ok(LabeledRecord { record: synth_record(&p)?.0, label: ClassId::NORM })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    save_records(out, &recs)?;
                    eprintln!("wrote {} records to {}", recs.len(), out.display());
                }
            }
        }
        Command::Import { common, leads, fs, label } => {
            let recs: Vec<LabeledRecord> = import_csv(input(&common)?, leads, fs)?
                .into_iter()
                .map(|record| LabeledRecord { record, label })
                .collect();
            save_records(output(&common)?, &recs)?;
            eprintln!("imported {} records", recs.len());
        }
        Command::Preprocess { common } => {
            let cfg = config(&common)?;
            let recs = load_records(input(&common)?)?;
            let out = recs
                .iter()
                .map(|r| {
                    let fs = r.record.sample_rate;
                    let notch = (cfg.notch_hz > 0.0).then_some(NotchSpec {
                        center_hz: cfg.notch_hz,
                        quality: cfg.notch_q,
                        sample_rate: fs,
                    });
                    if cfg.notch_hz >= fs / 2.0 && cfg.notch_hz > 0.0 {
                        eprintln!(
                            "warning: {}: {} Hz notch is not below Nyquist at {fs} Hz; skipped",
                            r.record.record_id, cfg.notch_hz
                        );
                    }
                    Ok(LabeledRecord {
                        record: preprocess_record(&r.record, cfg.window_n, notch)?,
                        label: r.label,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            save_records(output(&common)?, &out)?;
        }
        Command::Segment { common, lead } => {
            let cfg = config(&common)?;
            let mut beats = Vec::new();
            let mut dropped = 0;
            for r in load_records(input(&common)?)? {
                let rec = &r.record;
                let l = lead.unwrap_or(if rec.n_leads() > 1 { 1 } else { 0 });
                if l >= rec.n_leads() {
                    return Err(Error::InvalidParam(format!("lead {l} of {}", rec.n_leads())));
                }
                let peaks = detect_r_peaks(rec.lead(l), rec.sample_rate)?;
                let pre = (cfg.pre_s * rec.sample_rate).round() as usize;
                let post = (cfg.post_s * rec.sample_rate).round() as usize;
                let seg = segment_beats(rec, &peaks, pre, post, r.label)?;
                dropped += seg.dropped;
                beats.extend(seg.beats);
            }
            save_beats(output(&common)?, &beats)?;
            eprintln!("{} beats, {dropped} dropped at record borders", beats.len());
        }
        Command::Features { common } => {
            let cfg = config(&common)?;
            let beats = load_beats(input(&common)?)?;
            let fc = feature_config_for(&beats, &cfg)?;
            let file = FeatureFile {
                layout: fc.layout(),
                labels: beats.iter().map(|b| b.label).collect(),
                source_ids: beats.iter().map(|b| b.source_id.clone()).collect(),
                rows: feature_matrix(&beats, &fc)?,
            };
            write_json(output(&common)?, &file)?;
        }
        Command::Distmat { common, source, target } => {
            let cfg = config(&common)?;
            let beats = load_beats(input(&common)?)?;
            let pick = |c: Option<ClassId>| -> Vec<BeatTensor> {
                beats.iter().filter(|b| c.is_none_or(|c| b.label == c)).cloned().collect()
            };
            let (a, b) = (pick(source), pick(target));
            let (cost, hit) = cached_pairwise(output(&common)?, &a, &b, &shape_metric(&cfg))?;
            let (n, m) = cost.shape();
            eprintln!("{n}x{m} cost matrix ({})", if hit { "cache hit" } else { "computed" });
        }
        Command::Augment { common, mode } => {
            let cfg = config(&common)?;
            let beats = load_beats(input(&common)?)?;
            let new = augment_train(&beats, mode.into(), &cfg, cfg.seed)?;
            eprintln!("{} new beats: {:?}", new.len(), class_counts(&new));
            let all: Vec<BeatTensor> = beats.into_iter().chain(new).collect();
            save_beats(output(&common)?, &all)?;
        }
        Command::Train { common } => {
            let cfg = config(&common)?;
            let beats = load_beats(input(&common)?)?;
            let classes: Vec<ClassId> = class_counts(&beats).into_keys().collect();
            let fc = feature_config_for(&beats, &cfg)?;
            let (x, y) = design_matrix(&beats, &fc, &classes)?;
            let model = train_softmax(&x, &y, classes.len(), &train_hyper(&cfg))?;
            save_model(output(&common)?, &ModelFile { classes, features: fc, model })?;
        }
        Command::Attack { common, model } => {
            let cfg = config(&common)?;
            let mf = load_model(&model)?;
            let beats = load_beats(input(&common)?)?;
            let (x, y) = design_matrix(&beats, &mf.features, &mf.classes)?;
            let rows = robustness_sweep(&mf.model, &x, &y, &cfg.epsilons, &attack_template(&cfg))?;
            for r in &rows {
                eprintln!("eps {:<8} auroc {:?}", r.epsilon, r.auroc_macro);
            }
            write_json(output(&common)?, &rows)?;
        }
        Command::Eval { common, model } => {
            let mf = load_model(&model)?;
            let beats = load_beats(input(&common)?)?;
            let (x, y) = design_matrix(&beats, &mf.features, &mf.classes)?;
            let report = evaluate(&mf.model, &x, &y)?;
            eprintln!("macro F1 {:.4}  macro AUROC {:?}", report.f1_macro, report.auroc_macro);
            write_json(output(&common)?, &report)?;
        }
        Command::Summary { common } => {
            let s = dataset_summary(&load_beats(input(&common)?)?);
            println!("{:<6} {:>9} {:>7} {:>9} {:>7}", "class", "patients", "%", "beats", "%");
            for c in &s.classes {
                println!(
                    "{:<6} {:>9} {:>7.1} {:>9} {:>7.1}",
                    c.name, c.patients, c.patient_pct, c.beats, c.beat_pct
                );
            }
            println!("{:<6} {:>9} {:>7.1} {:>9} {:>7.1}", "total", s.distinct_patients, s.patient_pct_sum, s.total_beats, s.beat_pct_sum);
            if let Some(out) = &common.out {
                write_json(out, &s)?;
            }
        }
        Command::Run { common, mode } => {
            let cfg = config(&common)?;
            let beats = beats_or_benchmark(&common, cfg.seed)?;
            let out = run_experiment(&cfg, &beats, mode.into())?;
            let r = &out.report;
            eprintln!(
                "{}: train {} (+{}), test {}; macro F1 {:.4}, macro AUROC {:?}",
                r.mode, r.n_train, r.n_augmented, r.n_test, r.clean.f1_macro, r.clean.auroc_macro
            );
            write_experiment(output(&common)?, &out)?;
        }
    }
    Ok(())
}

fn stage_name(c: &Command) -> &'static str {
    match c {
        Command::Synth { .. } => "synth",
        Command::Import { .. } => "import",
        Command::Preprocess { .. } => "preprocess",
        Command::Segment { .. } => "segment",
        Command::Features { .. } => "features",
        Command::Distmat { .. } => "distmat",
        Command::Augment { .. } => "augment",
        Command::Train { .. } => "train",
        Command::Attack { .. } => "attack",
        Command::Eval { .. } => "eval",
        Command::Summary { .. } => "summary",
        Command::Run { .. } => "run",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = stage_name(&cli.command);
    match dispatch(cli.command).stage(stage) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
