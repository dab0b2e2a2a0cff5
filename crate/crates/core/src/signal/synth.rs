//! Synthetic ECG: each lead is a sum of three Gaussian bumps (P, QRS, T)
//! plus white noise. Used as ground truth for detector and pipeline tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::RawRecord;
use crate::beat::{BeatTensor, ClassId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub amplitude: f64,
    /// Seconds; relative to the beat start in [`synth_beat`], to the R peak
    /// in [`synth_record`].
    pub center_s: f64,
    /// Standard deviation in seconds.
    pub width_s: f64,
}

impl Bump {
    pub const fn new(amplitude: f64, center_s: f64, width_s: f64) -> Self {
        Self {
            amplitude,
            center_s,
            width_s,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let z = (t - self.center_s) / self.width_s;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadWaves {
    pub p: Bump,
    pub qrs: Bump,
    pub t: Bump,
}

impl LeadWaves {
    /// Textbook sinus morphology with the R peak at `t = 0`.
    pub fn sinus() -> Self {
        Self {
            p: Bump::new(0.15, -0.20, 0.025),
            qrs: Bump::new(1.0, 0.0, 0.012),
            t: Bump::new(0.30, 0.28, 0.05),
        }
    }

    /// A lone QRS bump.
    pub fn qrs_only(amplitude: f64, center_s: f64, width_s: f64) -> Self {
        let silent = Bump::new(0.0, center_s, width_s);
        Self {
            p: silent,
            qrs: Bump::new(amplitude, center_s, width_s),
            t: silent,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.p.eval(t) + self.qrs.eval(t) + self.t.eval(t)
    }

    pub fn shifted(&self, dt: f64) -> Self {
        let mut out = *self;
        for b in [&mut out.p, &mut out.qrs, &mut out.t] {
            b.center_s += dt;
        }
        out
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = *self;
        for b in [&mut out.p, &mut out.qrs, &mut out.t] {
            b.amplitude *= k;
        }
        out
    }

    fn bumps(&self) -> [&Bump; 3] {
        [&self.p, &self.qrs, &self.t]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBeatParams {
    pub leads: Vec<LeadWaves>,
    pub beat_len: usize,
    pub sample_rate: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub label: ClassId,
    pub source_id: String,
}

impl SynthBeatParams {
    /// Index of the QRS centre of lead 0.
    pub fn r_index(&self) -> usize {
        (self.leads[0].qrs.center_s * self.sample_rate).round() as usize
    }
}

fn noise(sigma: f64, seed: u64) -> Result<impl FnMut() -> f64> {
    let dist = Normal::new(0.0, sigma.max(0.0))
        .map_err(|e| Error::InvalidParam(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(move || if sigma > 0.0 { dist.sample(&mut rng) } else { 0.0 })
}

pub fn synth_beat(params: &SynthBeatParams) -> Result<BeatTensor> {
    if params.leads.is_empty() {
        return Err(Error::InvalidParam("no leads".into()));
    }
    if !(params.sample_rate > 0.0) || !(params.noise_sigma >= 0.0) {
        return Err(Error::InvalidParam("sample rate / noise sigma".into()));
    }
    let duration = params.beat_len as f64 / params.sample_rate;
    for lead in &params.leads {
        for b in lead.bumps() {
            if !(b.width_s > 0.0) || !(0.0..duration).contains(&b.center_s) {
                return Err(Error::InvalidParam(format!(
                    "bump centre {} s / width {} s outside a {duration} s beat",
                    b.center_s, b.width_s
                )));
            }
        }
    }
    let mut draw = noise(params.noise_sigma, params.seed)?;
    let mut samples = Vec::with_capacity(params.leads.len() * params.beat_len);
    for lead in &params.leads {
        for i in 0..params.beat_len {
            samples.push(lead.eval(i as f64 / params.sample_rate) + draw());
        }
    }
    BeatTensor::new(
        samples,
        params.leads.len(),
        params.label,
        params.sample_rate,
        params.source_id.clone(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecordParams {
    /// Per-lead morphology with the R peak at `t = 0`.
    pub leads: Vec<LeadWaves>,
    pub bpm: f64,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub noise_sigma: f64,
    /// Uniform RR jitter as a fraction of the nominal interval.
    pub rr_jitter: f64,
    pub seed: u64,
    pub record_id: String,
}

impl SynthRecordParams {
    pub fn sinus(n_leads: usize, bpm: f64, seed: u64) -> Self {
        let gains = [0.8, 1.0, 0.6, -0.4, 0.5, 0.7, 0.3, 0.9, 1.1, 1.0, 0.9, 0.7];
        Self {
            leads: (0..n_leads)
                .map(|l| LeadWaves::sinus().scaled(gains[l % gains.len()]))
                .collect(),
            bpm,
            duration_s: 10.0,
            sample_rate: 100.0,
            noise_sigma: 0.05,
            rr_jitter: 0.03,
            seed,
            record_id: format!("synth-{seed}"),
        }
    }
}

/// Builds a record and the ground-truth R-peak indices. QRS centres fall
/// exactly on samples; beats are kept at least 0.25 s away from either end.
pub fn synth_record(params: &SynthRecordParams) -> Result<(RawRecord, Vec<usize>)> {
    if params.leads.is_empty() || !(params.bpm > 0.0) || !(params.duration_s > 0.0) {
        return Err(Error::InvalidParam("leads / bpm / duration".into()));
    }
    let fs = params.sample_rate;
    let len = (params.duration_s * fs).round() as usize;
    let rr = 60.0 / params.bpm;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed_0f_7a11);
    let mut r_times = Vec::new();
    let mut t = 0.5 * rr;
    let margin = 0.25;
    while t <= params.duration_s - margin {
        if t >= margin {
            r_times.push((t * fs).round() / fs);
        }
        let jitter: f64 = rand::Rng::random_range(&mut rng, -1.0..=1.0);
        t += rr * (1.0 + params.rr_jitter * jitter);
    }
    let mut draw = noise(params.noise_sigma, params.seed)?;
    let mut samples = vec![0.0; params.leads.len() * len];
    for (l, lead) in params.leads.iter().enumerate() {
        let row = &mut samples[l * len..(l + 1) * len];
        for (i, v) in row.iter_mut().enumerate() {
            let ti = i as f64 / fs;
            *v = r_times
                .iter()
                .filter(|&&r| (ti - r).abs() < 1.0)
                .map(|&r| lead.eval(ti - r))
                .sum::<f64>()
                + draw();
        }
    }
    let peaks = r_times.iter().map(|r| (r * fs).round() as usize).collect();
    let record = RawRecord::new(
        samples,
        params.leads.len(),
        fs,
        params.record_id.clone(),
    )?;
    Ok((record, peaks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(leads: Vec<LeadWaves>, noise: f64, seed: u64) -> SynthBeatParams {
        SynthBeatParams {
            leads,
            beat_len: 100,
            sample_rate: 100.0,
            noise_sigma: noise,
            seed,
            label: ClassId::NORM,
            source_id: "s".into(),
        }
    }

    #[test]
    fn qrs_argmax_is_centre() {
        let p = params(vec![LeadWaves::qrs_only(1.0, 0.37, 0.012)], 0.0, 1);
        let b = synth_beat(&p).unwrap();
        let argmax = b
            .lead(0)
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap()
            .0;
        assert_eq!(argmax, p.r_index());
        assert_eq!(argmax, 37);
    }

    #[test]
    fn deterministic_and_linear() {
        let w = LeadWaves::sinus().shifted(0.5);
        let a = synth_beat(&params(vec![w], 0.05, 9)).unwrap();
        let b = synth_beat(&params(vec![w], 0.05, 9)).unwrap();
        assert_eq!(a, b);
        let one = synth_beat(&params(vec![w], 0.0, 0)).unwrap();
        let two = synth_beat(&params(vec![w.scaled(2.0)], 0.0, 0)).unwrap();
        for (x, y) in one.samples().iter().zip(two.samples()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn rejects_bad_bumps() {
        let w = LeadWaves::qrs_only(1.0, 1.5, 0.01);
        assert!(synth_beat(&params(vec![w], 0.0, 0)).is_err());
        let w = LeadWaves::qrs_only(1.0, 0.5, 0.0);
        assert!(synth_beat(&params(vec![w], 0.0, 0)).is_err());
    }

    #[test]
    fn record_ground_truth() {
        let (rec, peaks) = synth_record(&SynthRecordParams::sinus(2, 75.0, 3)).unwrap();
        assert_eq!(rec.len(), 1000);
        assert!(peaks.len() >= 11 && peaks.len() <= 13, "{}", peaks.len());
        assert!(peaks.windows(2).all(|w| w[1] > w[0]));
    }
}
