//! End-to-end experiment: subject-disjoint split, train-only augmentation,
//! features, classifier, clean and adversarial evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{
    class_counts, geodesic_augment_with, mixup_augment, random_oversample, smote_like, AugmentSpec,
};
use crate::beat::{BeatTensor, ClassId};
use crate::error::{Error, Result, StageExt};
use crate::eval::{
    evaluate, robustness_sweep, train_softmax, AttackSpec, ClassifierModel, MetricsReport,
    TrainHyper,
};
use crate::features::{feature_matrix, FeatureConfig};
use crate::io::{encode_beats, save_beats, sha256_hex, write_atomic, RunConfig};
use crate::metric::ShapeMetric;
use crate::ot::{Lambda, SinkhornParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    None,
    Oversample,
    Smote,
    Mixup,
    Geodesic,
}

impl AugmentMode {
    pub const ALL: [AugmentMode; 5] = [
        AugmentMode::None,
        AugmentMode::Oversample,
        AugmentMode::Smote,
        AugmentMode::Mixup,
        AugmentMode::Geodesic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentMode::None => "none",
            AugmentMode::Oversample => "oversample",
            AugmentMode::Smote => "smote",
            AugmentMode::Mixup => "mixup",
            AugmentMode::Geodesic => "geodesic",
        }
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown augmentation mode `{s}`")))
    }
}

/// SplitMix64 finalizer; derives independent seeds for the stages of a run.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TAG_SPLIT: u64 = 1;
const TAG_AUGMENT: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_ATTACK: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<BeatTensor>,
    pub test: Vec<BeatTensor>,
    /// SHA-256 of the encoded test beats.
    pub test_digest: String,
}

/// Patient-level split: every source id goes wholly to train or test, and
/// each class (a patient's most frequent label) sends
/// `round(test_fraction · patients)` of its patients to test, at least one
/// and never all when it has two or more. Beat order is preserved.
pub fn subject_split(beats: &[BeatTensor], test_fraction: f64, seed: u64) -> Result<Split> {
    if beats.is_empty() {
        return Err(Error::InvalidParam("nothing to split".into()));
    }
    let mut per_patient: BTreeMap<&str, BTreeMap<ClassId, usize>> = BTreeMap::new();
    for b in beats {
        *per_patient.entry(&b.source_id).or_default().entry(b.label).or_default() += 1;
    }
    let mut by_class: BTreeMap<ClassId, Vec<&str>> = BTreeMap::new();
    for (id, labels) in &per_patient {
        let top = labels
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(c, _)| *c)
            .expect("non-empty");
        by_class.entry(top).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_ids = BTreeSet::new();
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
        let n = ids.len();
        let k = if n < 2 {
            0
        } else {
            ((test_fraction * n as f64).round() as usize).clamp(1, n - 1)
        };
        test_ids.extend(ids[..k].iter().copied());
    }
    let (test, train): (Vec<_>, Vec<_>) = beats
        .iter()
        .cloned()
        .partition(|b| test_ids.contains(b.source_id.as_str()));
    let test_digest = sha256_hex(&encode_beats(&test)?);
    Ok(Split {
        train,
        test,
        test_digest,
    })
}

fn sinkhorn_params(cfg: &RunConfig) -> SinkhornParams {
    SinkhornParams {
        lambda: Lambda::RelativeToMaxCost(cfg.lambda),
        tol: cfg.sinkhorn_tol,
        max_iter: cfg.sinkhorn_max_iter,
    }
}

pub fn shape_metric(cfg: &RunConfig) -> ShapeMetric {
    ShapeMetric {
        lead_weights: None,
        grid_len: (cfg.grid_len > 0).then_some(cfg.grid_len),
    }
}

/// Synthetic training beats for every class other than the largest one:
/// `n_augment` each, or enough to match the largest class when it is 0.
/// Geodesic and mixup move from the largest class towards each minority
/// class; oversampling and SMOTE work inside the minority class.
pub fn augment_train(
    train: &[BeatTensor],
    mode: AugmentMode,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Vec<BeatTensor>> {
    if mode == AugmentMode::None {
        return Ok(Vec::new());
    }
    let counts = class_counts(train);
    let Some((&major, &top)) = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
    else {
        return Ok(Vec::new());
    };
    let majority: Vec<BeatTensor> = train.iter().filter(|b| b.label == major).cloned().collect();
    let metric = shape_metric(cfg);
    let mut out = Vec::new();
    for (&class, &have) in &counts {
        if class == major {
            continue;
        }
        let want = if cfg.n_augment > 0 { cfg.n_augment } else { top - have };
        if want == 0 {
            continue;
        }
        let class_seed = sub_seed(seed, class.0 as u64);
        let pool: Vec<BeatTensor> = train.iter().filter(|b| b.label == class).cloned().collect();
        let mut spec = AugmentSpec::new(major, class, want, class_seed);
        spec.alpha_min = cfg.alpha_min;
        spec.alpha_max = cfg.alpha_max;
        spec.batch_source = cfg.batch_source;
        spec.batch_target = cfg.batch_target;
        spec.sinkhorn = sinkhorn_params(cfg);
        let new = match mode {
            AugmentMode::None => unreachable!(),
            AugmentMode::Oversample => {
                let target = BTreeMap::from([(class, have + want)]);
                let mut all = random_oversample(&pool, &target, class_seed)?;
                all.split_off(pool.len())
            }
            AugmentMode::Smote => {
                if pool.len() < 2 {
                    continue;
                }
                smote_like(&pool, class, cfg.smote_k.min(pool.len() - 1), want, class_seed)?
            }
            AugmentMode::Mixup => mixup_augment(&majority, &pool, &spec)?,
            AugmentMode::Geodesic => geodesic_augment_with(&majority, &pool, &spec, &metric, None)?,
        };
        out.extend(new);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub mode: AugmentMode,
    pub seed: u64,
    pub config_hash: String,
    pub test_digest: String,
    pub classes: Vec<ClassId>,
    pub n_train: usize,
    pub n_augmented: usize,
    pub n_test: usize,
    pub clean: MetricsReport,
    pub robustness: Vec<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub augmented: Vec<BeatTensor>,
    pub model: ClassifierModel,
}

pub fn feature_config_for(beats: &[BeatTensor], cfg: &RunConfig) -> Result<FeatureConfig> {
    let first = beats.first().ok_or_else(|| Error::InvalidParam("no beats".into()))?;
    let fc = FeatureConfig {
        n_leads: first.n_leads(),
        beat_len: first.beat_len(),
        sample_rate: first.sample_rate,
        fs_out: cfg.fs_out.min(first.sample_rate),
        include_z10: false,
    };
    fc.validate()?;
    Ok(fc)
}

/// Feature rows plus class indices into `classes`.
pub fn design_matrix(
    beats: &[BeatTensor],
    fc: &FeatureConfig,
    classes: &[ClassId],
) -> Result<(Array2<f64>, Vec<usize>)> {
    let rows = feature_matrix(beats, fc)?;
    let dim = fc.layout().total();
    let x = Array2::from_shape_vec((rows.len(), dim), rows.concat())
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let y = beats
        .iter()
        .map(|b| {
            classes
                .iter()
                .position(|c| *c == b.label)
                .ok_or_else(|| Error::InvalidParam(format!("class {} not in model", b.label)))
        })
        .collect::<Result<_>>()?;
    Ok((x, y))
}

pub fn train_hyper(cfg: &RunConfig) -> TrainHyper {
    TrainHyper {
        lr: cfg.lr,
        l2: cfg.l2,
        epochs: cfg.epochs,
        seed: sub_seed(cfg.seed, TAG_TRAIN),
    }
}

/// ε is scaled into the step size (ε/4 per step) row by row.
pub fn attack_template(cfg: &RunConfig) -> AttackSpec {
    AttackSpec {
        epsilon: 1.0,
        steps: cfg.pgd_steps,
        step_size: 0.25,
        random_start: false,
        seed: sub_seed(cfg.seed, TAG_ATTACK),
    }
}

pub fn run_experiment(
    cfg: &RunConfig,
    beats: &[BeatTensor],
    mode: AugmentMode,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let classes: Vec<ClassId> = class_counts(beats).into_keys().collect();
    let split = subject_split(beats, cfg.test_fraction, sub_seed(cfg.seed, TAG_SPLIT)).stage("split")?;
    let augmented =
        augment_train(&split.train, mode, cfg, sub_seed(cfg.seed, TAG_AUGMENT)).stage("augment")?;
    let fc = feature_config_for(beats, cfg).stage("features")?;
    let train_set: Vec<BeatTensor> = split.train.iter().chain(&augmented).cloned().collect();
    let (x_train, y_train) = design_matrix(&train_set, &fc, &classes).stage("features")?;
    let (x_test, y_test) = design_matrix(&split.test, &fc, &classes).stage("features")?;
    let model = train_softmax(&x_train, &y_train, classes.len(), &train_hyper(cfg)).stage("train")?;
    let clean = evaluate(&model, &x_test, &y_test).stage("eval")?;
    let robustness = robustness_sweep(&model, &x_test, &y_test, &cfg.epsilons, &attack_template(cfg))
        .stage("attack")?;
    Ok(ExperimentOutput {
        report: ExperimentReport {
            mode,
            seed: cfg.seed,
            config_hash: cfg.hash(),
            test_digest: split.test_digest,
            classes,
            n_train: split.train.len(),
            n_augmented: augmented.len(),
            n_test: split.test.len(),
            clean,
            robustness,
        },
        augmented,
        model,
    })
}

/// `report_<mode>.json` and `augmented_<mode>.ecgb` under `dir`.
pub fn write_experiment(dir: &Path, out: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mode = out.report.mode;
    let mut json = serde_json::to_vec_pretty(&out.report)?;
    json.push(b'\n');
    write_atomic(&dir.join(format!("report_{mode}.json")), &json)?;
    save_beats(&dir.join(format!("augmented_{mode}.ecgb")), &out.augmented)
}

/// A trained classifier with everything needed to featurize new beats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub classes: Vec<ClassId>,
    pub features: FeatureConfig,
    pub model: ClassifierModel,
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    write_atomic(path, &serde_json::to_vec(model)?)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
