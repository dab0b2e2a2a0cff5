//! Class-to-class augmentation: geodesic (minibatch OT + displacement
//! interpolation) and the raw-space baselines.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::beat::{BeatTensor, ClassId};
use crate::density::DensityOnGrid;
use crate::error::{Error, Result};
use crate::metric::{density_to_beat, quantile_interpolate, ShapeMetric};
use crate::ot::{sinkhorn, CostMatrix, DiscreteMeasure, SinkhornParams};

/// How a source row of the coupling picks its partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Draw `j` with probability proportional to `π_ij`.
    #[default]
    SampleProportional,
    RowArgmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelPolicy {
    #[default]
    Target,
    Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub source_class: ClassId,
    pub target_class: ClassId,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub batch_source: usize,
    pub batch_target: usize,
    pub n_augment: usize,
    pub sinkhorn: SinkhornParams,
    pub pairing: Pairing,
    pub label_policy: LabelPolicy,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn new(source_class: ClassId, target_class: ClassId, n_augment: usize, seed: u64) -> Self {
        Self {
            source_class,
            target_class,
            alpha_min: 0.5,
            alpha_max: 0.9,
            batch_source: 32,
            batch_target: 32,
            n_augment,
            sinkhorn: SinkhornParams::default(),
            pairing: Pairing::default(),
            label_policy: LabelPolicy::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "alpha range [{}, {}] not inside [0, 1]",
                self.alpha_min, self.alpha_max
            )));
        }
        if self.batch_source == 0 || self.batch_target == 0 {
            return Err(Error::InvalidParam("batch sizes must be >= 1".into()));
        }
        if self.n_augment == 0 {
            return Err(Error::InvalidParam("n_augment must be >= 1".into()));
        }
        self.sinkhorn.validate()
    }

    fn label(&self) -> ClassId {
        match self.label_policy {
            LabelPolicy::Target => self.target_class,
            LabelPolicy::Source => self.source_class,
        }
    }

    fn draw_alpha(&self, rng: &mut impl Rng) -> f64 {
        if self.alpha_max > self.alpha_min {
            rng.random_range(self.alpha_min..=self.alpha_max)
        } else {
            self.alpha_min
        }
    }
}

/// Independent generator for round `index` of a run seeded with `seed`.
fn round_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_pool(beats: &[BeatTensor], class: ClassId, what: &str) -> Result<()> {
    if beats.is_empty() {
        return Err(Error::InvalidParam(format!("empty {what} set")));
    }
    if let Some(b) = beats.iter().find(|b| b.label != class) {
        return Err(Error::InvalidParam(format!(
            "{what} set holds a {} beat, expected {class}",
            b.label
        )));
    }
    if beats.iter().any(|b| !b.same_shape(&beats[0])) {
        return Err(Error::Dimension(format!("{what} beats differ in shape")));
    }
    Ok(())
}

/// Indices of a minibatch: without replacement when the pool is large
/// enough, otherwise the whole pool.
fn draw_batch(rng: &mut impl Rng, pool: usize, batch: usize) -> Vec<usize> {
    if batch >= pool {
        (0..pool).collect()
    } else {
        rand::seq::index::sample(rng, pool, batch).into_vec()
    }
}

/// Geodesic augmentation from `source` towards `target`.
///
/// Work is split into rounds of `batch_source` outputs. Each round draws its
/// own minibatches, couples them with Sinkhorn under the beat-shape metric
/// and walks every source beat of the batch along the per-lead Wasserstein
/// geodesic to its partner. Rounds use disjoint random streams, so the output
/// does not depend on how rounds are scheduled.
pub fn geodesic_augment(
    source: &[BeatTensor],
    target: &[BeatTensor],
    spec: &AugmentSpec,
) -> Result<Vec<BeatTensor>> {
    geodesic_augment_with(source, target, spec, &ShapeMetric::default(), None)
}

/// As [`geodesic_augment`], optionally reading minibatch costs out of a
/// precomputed `source × target` matrix.
pub fn geodesic_augment_with(
    source: &[BeatTensor],
    target: &[BeatTensor],
    spec: &AugmentSpec,
    metric: &ShapeMetric,
    full_cost: Option<&CostMatrix>,
) -> Result<Vec<BeatTensor>> {
    spec.validate()?;
    check_pool(source, spec.source_class, "source")?;
    check_pool(target, spec.target_class, "target")?;
    if !source[0].same_shape(&target[0]) {
        return Err(Error::Dimension(format!(
            "source beats are {}x{}, target beats {}x{}",
            source[0].n_leads(),
            source[0].beat_len(),
            target[0].n_leads(),
            target[0].beat_len()
        )));
    }
    if let Some(c) = full_cost {
        if c.shape() != (source.len(), target.len()) {
            return Err(Error::Dimension(format!(
                "cached cost is {:?}, pools are {}x{}",
                c.shape(),
                source.len(),
                target.len()
            )));
        }
    }

    let dens_s: Vec<Vec<DensityOnGrid>> =
        source.par_iter().map(|b| metric.densities(b)).collect::<Result<_>>()?;
    let dens_t: Vec<Vec<DensityOnGrid>> =
        target.par_iter().map(|b| metric.densities(b)).collect::<Result<_>>()?;

    let per_round = spec.batch_source.min(source.len());
    let rounds = spec.n_augment.div_ceil(per_round);
    let label = spec.label();
    let beat_len = source[0].beat_len();
    let sample_rate = source[0].sample_rate;

    let batches: Vec<Vec<BeatTensor>> = (0..rounds)
        .into_par_iter()
        .map(|r| -> Result<Vec<BeatTensor>> {
            let mut rng = round_rng(spec.seed, r as u64);
            let bs = draw_batch(&mut rng, source.len(), spec.batch_source);
            let bt = draw_batch(&mut rng, target.len(), spec.batch_target);
            let cost = match full_cost {
                Some(c) => {
                    let sub = c.matrix().select(ndarray::Axis(0), &bs);
                    CostMatrix::new(sub.select(ndarray::Axis(1), &bt), c.metric)?
                }
                None => {
                    let a: Vec<_> = bs.iter().map(|&i| dens_s[i].clone()).collect();
                    let b: Vec<_> = bt.iter().map(|&j| dens_t[j].clone()).collect();
                    metric.pairwise_densities(&a, &b)?
                }
            };
            let plan = sinkhorn(
                &cost,
                &DiscreteMeasure::uniform(bs.len())?,
                &DiscreteMeasure::uniform(bt.len())?,
                &spec.sinkhorn,
            )?
            .plan;
            let want = per_round.min(spec.n_augment - r * per_round);
            let mut out = Vec::with_capacity(want);
            for (row, &i) in bs.iter().enumerate().take(want) {
                let weights = plan.matrix.row(row);
                let col = match spec.pairing {
                    Pairing::RowArgmax => weights
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                        .map(|(k, _)| k)
                        .unwrap_or(0),
                    Pairing::SampleProportional => WeightedIndex::new(weights.iter())
                        .map_err(|e| Error::InvalidParam(format!("coupling row: {e}")))?
                        .sample(&mut rng),
                };
                let j = bt[col];
                let alpha = spec.draw_alpha(&mut rng);
                let lead_dens = dens_s[i]
                    .iter()
                    .zip(&dens_t[j])
                    .map(|(a, b)| quantile_interpolate(a, b, alpha))
                    .collect::<Result<Vec<_>>>()?;
                out.push(density_to_beat(
                    &lead_dens,
                    beat_len,
                    label,
                    sample_rate,
                    format!("geo:{}>{}", source[i].source_id, target[j].source_id),
                )?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// `(1 − α) x + α y`, labelled like `y`.
pub fn linear_mixup(x: &BeatTensor, y: &BeatTensor, alpha: f64) -> Result<BeatTensor> {
    if !x.same_shape(y) {
        return Err(Error::Dimension("mixup of differently shaped beats".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam(format!("alpha {alpha} outside [0, 1]")));
    }
    let samples = x
        .samples()
        .iter()
        .zip(y.samples())
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    BeatTensor::new(
        samples,
        x.n_leads(),
        y.label,
        x.sample_rate,
        format!("mix:{}>{}", x.source_id, y.source_id),
    )
}

/// Mixup counterpart of [`geodesic_augment`]: uniformly random pairs, the
/// same α range and label policy, interpolation in raw sample space.
pub fn mixup_augment(
    source: &[BeatTensor],
    target: &[BeatTensor],
    spec: &AugmentSpec,
) -> Result<Vec<BeatTensor>> {
    spec.validate()?;
    check_pool(source, spec.source_class, "source")?;
    check_pool(target, spec.target_class, "target")?;
    let mut rng = round_rng(spec.seed, 0);
    (0..spec.n_augment)
        .map(|_| {
            let x = &source[rng.random_range(0..source.len())];
            let y = &target[rng.random_range(0..target.len())];
            let alpha = spec.draw_alpha(&mut rng);
            Ok(linear_mixup(x, y, alpha)?.with_label(spec.label()))
        })
        .collect()
}

pub fn class_counts(dataset: &[BeatTensor]) -> BTreeMap<ClassId, usize> {
    let mut counts = BTreeMap::new();
    for b in dataset {
        *counts.entry(b.label).or_insert(0) += 1;
    }
    counts
}

/// Every class raised to the size of the largest one.
pub fn balanced_counts(dataset: &[BeatTensor]) -> BTreeMap<ClassId, usize> {
    let counts = class_counts(dataset);
    let top = counts.values().copied().max().unwrap_or(0);
    counts.keys().map(|&c| (c, top)).collect()
}

/// Pads each class with uniformly drawn duplicates until it reaches
/// `target_counts`; the originals come first, in order. Classes missing
/// from `target_counts` are left alone.
pub fn random_oversample(
    dataset: &[BeatTensor],
    target_counts: &BTreeMap<ClassId, usize>,
    seed: u64,
) -> Result<Vec<BeatTensor>> {
    let counts = class_counts(dataset);
    let mut out = dataset.to_vec();
    let mut rng = round_rng(seed, 0);
    for (&class, &want) in target_counts {
        let have = counts.get(&class).copied().unwrap_or(0);
        if want < have {
            return Err(Error::InvalidParam(format!(
                "target {want} for {class} is below its {have} beats"
            )));
        }
        if want == have {
            continue;
        }
        let members: Vec<&BeatTensor> = dataset.iter().filter(|b| b.label == class).collect();
        if members.is_empty() {
            return Err(Error::InvalidParam(format!("no {class} beats to duplicate")));
        }
        for _ in have..want {
            out.push((*members.choose(&mut rng).expect("non-empty")).clone());
        }
    }
    Ok(out)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (y - x)).sum::<f64>().abs()
}

/// SMOTE in flattened sample space: a random member moves a uniform
/// fraction of the way towards one of its `k` nearest classmates.
pub fn smote_like(
    dataset: &[BeatTensor],
    class_id: ClassId,
    k: usize,
    n_new: usize,
    seed: u64,
) -> Result<Vec<BeatTensor>> {
    smote_with(dataset, class_id, k, n_new, seed, |rng| rng.random_range(0.0..=1.0))
}

fn smote_with(
    dataset: &[BeatTensor],
    class_id: ClassId,
    k: usize,
    n_new: usize,
    seed: u64,
    mut lambda: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Result<Vec<BeatTensor>> {
    let members: Vec<&BeatTensor> = dataset.iter().filter(|b| b.label == class_id).collect();
    if k == 0 || members.len() < k + 1 {
        return Err(Error::InvalidParam(format!(
            "SMOTE with k={k} needs {} {class_id} beats, found {}",
            k + 1,
            members.len()
        )));
    }
    if members.iter().any(|b| !b.same_shape(members[0])) {
        return Err(Error::Dimension(format!("{class_id} beats differ in shape")));
    }
    let neighbours: Vec<Vec<usize>> = (0..members.len())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..members.len())
                .filter(|&j| j != i)
                .map(|j| (sq_dist(members[i].samples(), members[j].samples()), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();
    let mut rng = round_rng(seed, 0);
    (0..n_new)
        .map(|_| {
            let i = rng.random_range(0..members.len());
            let j = neighbours[i][rng.random_range(0..k)];
            let lam = lambda(&mut rng);
            let (x, y) = (members[i], members[j]);
            let samples = x
                .samples()
                .iter()
                .zip(y.samples())
                .map(|(a, b)| a + lam * (b - a))
                .collect();
            BeatTensor::new(
                samples,
                x.n_leads(),
                class_id,
                x.sample_rate,
                format!("smote:{}>{}", x.source_id, y.source_id),
            )
        })
        .collect()
}
