//! Synthetic imbalanced multi-lead beat benchmark.
//!
//! Each class is a sum of Gaussian waves (P, Q, R, S, ST segment, T) around
//! an R peak in the middle of the beat. Every patient draws its own
//! amplitudes, timings and lead gains, so beats cluster by patient and
//! classes overlap; every beat then adds jitter and white noise.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::beat::{BeatTensor, ClassId};
use crate::error::{Error, Result};
use crate::signal::Bump;

/// Limb and chest lead projections of the cardiac axis, roughly.
const LEAD_GAINS: [f64; 12] = [0.9, 1.2, 0.4, -1.0, 0.3, 0.8, 0.4, 0.7, 1.1, 1.3, 1.2, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    /// `(class, beats)`; classes must be among NORM, MI, STTC.
    pub classes: Vec<(ClassId, usize)>,
    pub beats_per_patient: usize,
    pub n_leads: usize,
    pub beat_len: usize,
    pub sample_rate: f64,
    pub noise_sigma: f64,
    /// Scales every class's deviation from the normal template.
    pub separation: f64,
    /// Standard deviation of the per-beat offset of the R peak from the
    /// window centre, in seconds (segmentation misalignment).
    pub jitter_s: f64,
    pub seed: u64,
}

impl BenchmarkSpec {
    /// 1000 normal beats against 100 MI and 100 ST/T-change beats, 12 leads,
    /// one second at 100 Hz, five beats per patient. Classes overlap: the
    /// noise is a quarter of the R amplitude and class deviations are half
    /// the template deltas.
    pub fn imbalanced(seed: u64) -> Self {
        Self {
            classes: vec![(ClassId::NORM, 1000), (ClassId::MI, 100), (ClassId::STTC, 100)],
            beats_per_patient: 5,
            n_leads: 12,
            beat_len: 100,
            sample_rate: 100.0,
            noise_sigma: 0.25,
            separation: 0.5,
            jitter_s: 0.006,
            seed,
        }
    }
}

/// Waves relative to the R peak: P, Q, R, S, ST, T.
fn template(class: ClassId, separation: f64) -> Result<[Bump; 6]> {
    let normal = [
        Bump::new(0.15, -0.18, 0.025),
        Bump::new(-0.08, -0.025, 0.008),
        Bump::new(1.0, 0.0, 0.012),
        Bump::new(-0.15, 0.025, 0.010),
        Bump::new(0.0, 0.10, 0.040),
        Bump::new(0.30, 0.26, 0.050),
    ];
    // amplitude deviations from normal, per wave
    let delta: [f64; 6] = match class {
        ClassId::NORM => [0.0; 6],
        ClassId::MI => [0.0, -0.25, -0.30, 0.0, 0.15, 0.05],
        ClassId::STTC => [0.0, 0.0, -0.05, 0.0, -0.12, -0.40],
        other => {
            return Err(Error::InvalidParam(format!("no benchmark template for {other}")))
        }
    };
    let mut out = normal;
    for (b, d) in out.iter_mut().zip(delta) {
        b.amplitude += separation * d;
    }
    Ok(out)
}

struct Patient {
    waves: [Bump; 6],
    gains: Vec<f64>,
    baseline: f64,
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    Normal::new(0.0, sigma).expect("sigma > 0").sample(rng)
}

fn draw_patient(rng: &mut ChaCha8Rng, base: &[Bump; 6], n_leads: usize) -> Patient {
    let mut waves = *base;
    let scale = 1.0 + gauss(rng, 0.15);
    let t_scale = 1.0 + gauss(rng, 0.25);
    let stretch = 1.0 + gauss(rng, 0.06);
    for (k, w) in waves.iter_mut().enumerate() {
        w.amplitude *= scale * if k >= 4 { t_scale } else { 1.0 } * (1.0 + gauss(rng, 0.08));
        w.center_s *= stretch;
    }
    let gains = (0..n_leads)
        .map(|l| LEAD_GAINS[l % LEAD_GAINS.len()] * (1.0 + gauss(rng, 0.12)))
        .collect();
    Patient {
        waves,
        gains,
        baseline: gauss(rng, 0.05),
    }
}

pub fn generate_benchmark(spec: &BenchmarkSpec) -> Result<Vec<BeatTensor>> {
    if spec.beats_per_patient == 0 || spec.n_leads == 0 || spec.beat_len < 8 {
        return Err(Error::InvalidParam("benchmark needs patients, leads and beats".into()));
    }
    if !(spec.sample_rate > 0.0 && spec.noise_sigma >= 0.0 && spec.separation >= 0.0 && spec.jitter_s >= 0.0) {
        return Err(Error::InvalidParam("bad benchmark rates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r_time = (spec.beat_len / 2) as f64 / spec.sample_rate;
    let mut beats = Vec::new();
    for &(class, count) in &spec.classes {
        let base = template(class, spec.separation)?;
        let mut made = 0;
        let mut patient_no = 0;
        while made < count {
            let patient = draw_patient(&mut rng, &base, spec.n_leads);
            let id = format!("{}-{patient_no:04}", class.name());
            patient_no += 1;
            for _ in 0..spec.beats_per_patient.min(count - made) {
                let shift = if spec.jitter_s > 0.0 { gauss(&mut rng, spec.jitter_s) } else { 0.0 };
                let amp = 1.0 + gauss(&mut rng, 0.03);
                let mut samples = Vec::with_capacity(spec.n_leads * spec.beat_len);
                for g in &patient.gains {
                    for i in 0..spec.beat_len {
                        let t = i as f64 / spec.sample_rate - r_time - shift;
                        let v: f64 = patient.waves.iter().map(|w| w.eval(t)).sum();
                        let noise = if spec.noise_sigma > 0.0 {
                            gauss(&mut rng, spec.noise_sigma)
                        } else {
                            0.0
                        };
                        samples.push(amp * g * v + patient.baseline + noise);
                    }
                }
                beats.push(BeatTensor::new(samples, spec.n_leads, class, spec.sample_rate, id.clone())?);
                made += 1;
            }
        }
    }
    Ok(beats)
}
