//! Softmax-linear classifier, PGD attack in standardized feature space and
//! the evaluation metrics (one-vs-rest AUROC, F1, confusion matrix).

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 0.1,
            l2: 1e-4,
            epochs: 500,
            seed: 0,
        }
    }
}

/// `n_classes × dim` weights over standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

fn check_features(x: &Array2<f64>, y: &[usize]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix"));
    }
    Ok(())
}

fn softmax_row(mut row: ndarray::ArrayViewMut1<f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    row.mapv_inplace(|v| (v - max).exp());
    let s = row.sum();
    row.mapv_inplace(|v| v / s);
}

fn softmax(mut logits: Array2<f64>) -> Array2<f64> {
    for row in logits.rows_mut() {
        softmax_row(row);
    }
    logits
}

fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl ClassifierModel {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    fn check_dim(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "model takes {} features, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn standardize(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_dim(x)?;
        Ok((x - &self.mean) / &self.std)
    }

    /// Logits of already standardized rows.
    pub fn logits_std(&self, z: &Array2<f64>) -> Array2<f64> {
        z.dot(&self.weights.t()) + &self.bias
    }

    pub fn proba_std(&self, z: &Array2<f64>) -> Array2<f64> {
        softmax(self.logits_std(z))
    }

    /// Mean cross-entropy plus `l2/2 · ‖W‖²`, and its gradients with
    /// respect to weights and bias, on standardized rows.
    pub fn loss_and_grad(&self, z: &Array2<f64>, y: &[usize], l2: f64) -> (f64, Array2<f64>, Array1<f64>) {
        let n = z.nrows() as f64;
        let logits = self.logits_std(z);
        let ce: f64 = logits
            .rows()
            .into_iter()
            .zip(y)
            .map(|(row, &c)| log_sum_exp(row) - row[c])
            .sum::<f64>()
            / n;
        let loss = ce + 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        let mut resid = softmax(logits);
        for (mut row, &c) in resid.rows_mut().into_iter().zip(y) {
            row[c] -= 1.0;
        }
        let gw = resid.t().dot(z) / n + &(&self.weights * l2);
        let gb = resid.sum_axis(Axis(0)) / n;
        (loss, gw, gb)
    }

    /// Per-sample cross-entropy of standardized rows.
    pub fn sample_losses(&self, z: &Array2<f64>, y: &[usize]) -> Vec<f64> {
        self.logits_std(z)
            .rows()
            .into_iter()
            .zip(y)
            .map(|(row, &c)| log_sum_exp(row) - row[c])
            .collect()
    }

    /// Gradient of one sample's cross-entropy with respect to its
    /// standardized input.
    pub fn input_grad(&self, z: ArrayView1<f64>, class: usize) -> Array1<f64> {
        let mut p = self.weights.dot(&z) + &self.bias;
        softmax_row(p.view_mut());
        p[class] -= 1.0;
        self.weights.t().dot(&p)
    }
}

/// Upper bound on the Lipschitz constant of the training gradient; plain
/// gradient descent decreases the loss for `lr < 2 / bound`.
pub fn lipschitz_bound(z: &Array2<f64>, l2: f64) -> f64 {
    let n = z.nrows().max(1) as f64;
    0.5 * (z.iter().map(|v| v * v).sum::<f64>() / n + 1.0) + l2
}

pub fn train_softmax(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    hyper: &TrainHyper,
) -> Result<ClassifierModel> {
    train_softmax_logged(x, y, n_classes, hyper).map(|(m, _)| m)
}

/// Full-batch gradient descent; also returns the loss before every epoch.
pub fn train_softmax_logged(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    hyper: &TrainHyper,
) -> Result<(ClassifierModel, Vec<f64>)> {
    check_features(x, y)?;
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidParam(format!("label {bad} >= {n_classes} classes")));
    }
    let mut present = y.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::InvalidParam("training needs at least two classes".into()));
    }
    if !(hyper.lr > 0.0 && hyper.l2 >= 0.0) {
        return Err(Error::InvalidParam("lr must be > 0 and l2 >= 0".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > STD_FLOOR { s } else { STD_FLOOR });
    let normal = Normal::new(0.0, 0.01).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut model = ClassifierModel {
        weights: Array2::from_shape_simple_fn((n_classes, x.ncols()), || normal.sample(&mut rng)),
        bias: Array1::zeros(n_classes),
        mean,
        std,
    };
    let z = model.standardize(x)?;
    let mut history = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        let (loss, gw, gb) = model.loss_and_grad(&z, y, hyper.l2);
        history.push(loss);
        model.weights.scaled_add(-hyper.lr, &gw);
        model.bias.scaled_add(-hyper.lr, &gb);
    }
    Ok((model, history))
}

pub fn predict_proba(model: &ClassifierModel, x: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(model.proba_std(&model.standardize(x)?))
}

pub fn argmax_rows(p: &Array2<f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    /// ℓ∞ radius in standardized feature units.
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    /// Start from a uniform point of the ball instead of the clean input.
    pub random_start: bool,
    pub seed: u64,
}

impl AttackSpec {
    /// Ten steps of ε/4.
    pub fn pgd(epsilon: f64, seed: u64) -> Self {
        Self {
            epsilon,
            steps: 10,
            step_size: epsilon / 4.0,
            random_start: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParam(format!("epsilon {}", self.epsilon)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParam("steps must be >= 1".into()));
        }
        if !(self.step_size > 0.0) && self.epsilon > 0.0 {
            return Err(Error::InvalidParam(format!("step_size {}", self.step_size)));
        }
        Ok(())
    }
}

/// Clamps `v` into `[c − eps, c + eps]` such that `|v − c| ≤ eps` holds in
/// floating point, not just on paper.
fn project(v: f64, c: f64, eps: f64) -> f64 {
    let mut v = v.clamp(c - eps, c + eps);
    while (v - c).abs() > eps {
        v = if v > c { v.next_down() } else { v.next_up() };
    }
    v
}

/// ℓ∞ PGD on standardized rows, keeping the highest-loss iterate per sample
/// (the clean point included).
pub fn pgd_attack(
    model: &ClassifierModel,
    z: &Array2<f64>,
    y: &[usize],
    spec: &AttackSpec,
) -> Result<Array2<f64>> {
    spec.validate()?;
    check_features(z, y)?;
    model.check_dim(z)?;
    if spec.epsilon == 0.0 {
        return Ok(z.clone());
    }
    let eps = spec.epsilon;
    let rows: Vec<Array1<f64>> = (0..z.nrows())
        .into_par_iter()
        .map(|i| {
            let x0 = z.row(i);
            let c = y[i];
            let loss = |v: &Array1<f64>| {
                let l = model.weights.dot(v) + &model.bias;
                log_sum_exp(l.view()) - l[c]
            };
            let mut x = x0.to_owned();
            if spec.random_start {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(i as u64);
                for (v, &o) in x.iter_mut().zip(x0) {
                    *v = project(o + rng.random_range(-eps..=eps), o, eps);
                }
            }
            let mut best = x0.to_owned();
            let mut best_loss = loss(&best);
            if spec.random_start {
                let l = loss(&x);
                if l > best_loss {
                    best_loss = l;
                    best = x.clone();
                }
            }
            for _ in 0..spec.steps {
                let g = model.input_grad(x.view(), c);
                for ((v, &gk), &o) in x.iter_mut().zip(&g).zip(x0) {
                    let step = if gk > 0.0 {
                        spec.step_size
                    } else if gk < 0.0 {
                        -spec.step_size
                    } else {
                        0.0
                    };
                    *v = project(*v + step, o, eps);
                }
                let l = loss(&x);
                if l > best_loss {
                    best_loss = l;
                    best = x.clone();
                }
            }
            best
        })
        .collect();
    let mut out = Array2::zeros(z.raw_dim());
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&src);
    }
    Ok(out)
}

/// One-vs-rest AUROC with midranks. A class without positives or without
/// negatives is `None` and left out of the macro mean.
pub fn auroc(scores: &Array2<f64>, y: &[usize]) -> Result<(Vec<Option<f64>>, Option<f64>)> {
    if scores.nrows() != y.len() {
        return Err(Error::Dimension("scores and labels differ in length".into()));
    }
    let per: Vec<Option<f64>> = (0..scores.ncols())
        .map(|k| binary_auroc(scores.column(k).to_vec(), y, k))
        .collect();
    Ok((per.clone(), macro_mean(&per)))
}

fn macro_mean(per: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = per.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Mann–Whitney statistic of `scores` for `y == positive`.
pub fn binary_auroc(scores: Vec<f64>, y: &[usize], positive: usize) -> Option<f64> {
    let n_pos = y.iter().filter(|&&c| c == positive).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|&&k| y[k] == positive).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Per-class F1, macro F1 over all `n_classes`, and
/// `confusion[true][predicted]`.
pub fn f1_and_confusion(
    pred: &[usize],
    y: &[usize],
    n_classes: usize,
) -> Result<(Vec<f64>, f64, Vec<Vec<usize>>)> {
    if pred.len() != y.len() {
        return Err(Error::Dimension("predictions and labels differ in length".into()));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(y) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::InvalidParam(format!(
                "label {} outside {n_classes} classes",
                p.max(t)
            )));
        }
        confusion[t][p] += 1;
    }
    let f1: Vec<f64> = (0..n_classes)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let predicted: usize = (0..n_classes).map(|t| confusion[t][k]).sum();
            let actual: usize = confusion[k].iter().sum();
            let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
            if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                0.0
            }
        })
        .collect();
    let macro_f1 = f1.iter().sum::<f64>() / n_classes.max(1) as f64;
    Ok((f1, macro_f1, confusion))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epsilon: f64,
    pub auroc_macro: Option<f64>,
    pub f1_macro: f64,
    pub per_class_auroc: Vec<Option<f64>>,
    pub per_class_f1: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
}

/// Metrics of the model on standardized rows, tagged with `epsilon`.
pub fn evaluate_std(
    model: &ClassifierModel,
    z: &Array2<f64>,
    y: &[usize],
    epsilon: f64,
) -> Result<MetricsReport> {
    check_features(z, y)?;
    let proba = model.proba_std(z);
    let (per_class_auroc, auroc_macro) = auroc(&proba, y)?;
    let (per_class_f1, f1_macro, confusion) = f1_and_confusion(&argmax_rows(&proba), y, model.n_classes())?;
    Ok(MetricsReport {
        epsilon,
        auroc_macro,
        f1_macro,
        per_class_auroc,
        per_class_f1,
        confusion,
    })
}

pub fn evaluate(model: &ClassifierModel, x: &Array2<f64>, y: &[usize]) -> Result<MetricsReport> {
    evaluate_std(model, &model.standardize(x)?, y, 0.0)
}

/// One report per ε, in the given order; each row attacks the clean inputs
/// with `template` at that radius (step size scaled as `template` scales
/// with its own ε, or kept when the template ε is 0).
pub fn robustness_sweep(
    model: &ClassifierModel,
    x: &Array2<f64>,
    y: &[usize],
    epsilons: &[f64],
    template: &AttackSpec,
) -> Result<Vec<MetricsReport>> {
    let z = model.standardize(x)?;
    epsilons
        .iter()
        .map(|&eps| {
            let step_size = if template.epsilon > 0.0 {
                template.step_size * eps / template.epsilon
            } else {
                template.step_size
            };
            let spec = AttackSpec {
                epsilon: eps,
                step_size,
                ..*template
            };
            let adv = pgd_attack(model, &z, y, &spec)?;
            evaluate_std(model, &adv, y, eps)
        })
        .collect()
}
