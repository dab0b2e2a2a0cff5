//! Per-lead time- and frequency-domain statistics and the concatenated beat
//! feature vector (downsampled signal | time stats | spectral stats, per lead).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beat::BeatTensor;
use crate::error::{ensure_finite, Error, Result};
use crate::signal::{downsample, fft_spectrum, SpectrumView};

pub const N_TIME_FEATURES: usize = 13;
pub const N_FREQ_FEATURES: usize = 9;
pub const MODE_BINS: usize = 16;

pub const TIME_FEATURE_NAMES: [&str; N_TIME_FEATURES] = [
    "max", "min", "range", "mean", "median", "mode", "std", "rms", "mean_square", "skewness",
    "kurtosis", "waveform_factor", "pulse_factor",
];

fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Centre of the most populated of 16 equal bins over `[min, max]`; ties go
/// to the lower bin.
fn histogram_mode(x: &[f64], min: f64, max: f64) -> f64 {
    let range = max - min;
    if range <= 0.0 {
        return min;
    }
    let width = range / MODE_BINS as f64;
    let mut counts = [0usize; MODE_BINS];
    for &v in x {
        let b = (((v - min) / width) as usize).min(MODE_BINS - 1);
        counts[b] += 1;
    }
    let mut best = 0;
    for b in 1..MODE_BINS {
        if counts[b] > counts[best] {
            best = b;
        }
    }
    min + (best as f64 + 0.5) * width
}

/// Thirteen summary statistics of one lead, in the order of
/// [`TIME_FEATURE_NAMES`]. Kurtosis is excess kurtosis; zero-variance input
/// gives skewness = kurtosis = 0 and zero mean-|x| gives zero factors.
pub fn time_features(lead: &[f64]) -> Result<[f64; N_TIME_FEATURES]> {
    if lead.len() < 2 {
        return Err(Error::InvalidParam("time features need >= 2 samples".into()));
    }
    ensure_finite(lead, "time_features input")?;
    let n = lead.len() as f64;
    let max = lead.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = lead.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = lead.iter().sum::<f64>() / n;
    let central = |p: i32| lead.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n;
    let var = central(2);
    let std = var.sqrt();
    let mean_square = lead.iter().map(|v| v * v).sum::<f64>() / n;
    let rms = mean_square.sqrt();
    let mean_abs = lead.iter().map(|v| v.abs()).sum::<f64>() / n;
    let peak_abs = max.abs().max(min.abs());
    // relative guard so float noise on a constant lead is not read as shape
    let (skew, kurt) = if var > 1e-24 * mean_square.max(f64::MIN_POSITIVE) {
        (central(3) / var.powf(1.5), central(4) / (var * var) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let (waveform, pulse) = if mean_abs > 0.0 {
        (rms / mean_abs, peak_abs / mean_abs)
    } else {
        (0.0, 0.0)
    };
    Ok([
        max,
        min,
        max - min,
        mean,
        median(lead),
        histogram_mode(lead, min, max),
        std,
        rms,
        mean_square,
        skew,
        kurt,
        waveform,
        pulse,
    ])
}

/// Spectral statistics Z1..Z9 (Z10 as a tenth value when `include_z10`).
///
/// The shape terms Z7–Z10 subtract magnitudes from frequencies exactly as
/// the formulas are usually printed; they are kept verbatim.
pub fn freq_features(spec: &SpectrumView, include_z10: bool) -> Result<Vec<f64>> {
    let big_f = &spec.magnitudes;
    let f = &spec.freqs;
    if big_f.len() < 2 {
        return Err(Error::InvalidParam("spectrum needs >= 2 bins".into()));
    }
    ensure_finite(big_f, "spectrum")?;
    ensure_finite(f, "spectrum frequencies")?;
    let n = big_f.len() as f64;
    let sum_f: f64 = big_f.iter().sum();
    let z1 = sum_f / n;
    let z2 = big_f.iter().map(|v| (v - z1).powi(2)).sum::<f64>() / (n - 1.0);
    let z3 = if z1 > 0.0 {
        -big_f
            .iter()
            .map(|&v| {
                let p = v / (z1 * n);
                if p > 0.0 {
                    p * p.log2()
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    } else {
        0.0
    };
    let z4 = big_f.iter().map(|v| v * v).sum::<f64>() / n;
    let (z5, z6) = if z2 > 0.0 {
        let sd = z2.sqrt();
        (
            big_f.iter().map(|v| ((v - z1) / sd).powi(3)).sum::<f64>() / n,
            big_f.iter().map(|v| ((v - z1) / sd).powi(4)).sum::<f64>() / n,
        )
    } else {
        (0.0, 0.0)
    };
    let weighted = |g: &dyn Fn(f64, f64) -> f64| -> f64 {
        f.iter().zip(big_f).map(|(&fk, &mk)| g(fk, mk) * mk).sum::<f64>() / sum_f
    };
    let (z7, z8, z9, z10) = if sum_f > 0.0 {
        (
            f.iter().zip(big_f).map(|(a, b)| a - b).sum::<f64>() / sum_f,
            weighted(&|fk, _| (fk - z6).powi(2)).sqrt(),
            weighted(&|fk, mk| (fk - mk).powi(3)),
            weighted(&|fk, mk| (fk - mk).powi(4)),
        )
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    let mut out = vec![z1, z2, z3, z4, z5, z6, z7, z8, z9];
    if include_z10 {
        out.push(z10);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_leads: usize,
    pub beat_len: usize,
    pub sample_rate: f64,
    /// Rate of the raw-signal block.
    pub fs_out: f64,
    pub include_z10: bool,
}

impl FeatureConfig {
    /// 12 leads, 1 s beats at 100 Hz, raw block at 50 Hz.
    pub fn paper() -> Self {
        Self {
            n_leads: 12,
            beat_len: 100,
            sample_rate: 100.0,
            fs_out: 50.0,
            include_z10: false,
        }
    }

    pub fn raw_len(&self) -> usize {
        let ratio = (self.sample_rate / self.fs_out).round() as usize;
        self.beat_len.div_ceil(ratio.max(1))
    }

    pub fn n_freq(&self) -> usize {
        N_FREQ_FEATURES + usize::from(self.include_z10)
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            n_leads: self.n_leads,
            raw: self.raw_len(),
            time: N_TIME_FEATURES,
            freq: self.n_freq(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_leads == 0 || self.beat_len < 2 {
            return Err(Error::InvalidParam("feature config needs leads and beat_len >= 2".into()));
        }
        let ratio = self.sample_rate / self.fs_out;
        if !(ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return Err(Error::InvalidParam(format!(
                "fs_out {} must divide sample_rate {}",
                self.fs_out, self.sample_rate
            )));
        }
        Ok(())
    }
}

/// Per-lead block lengths. Values are grouped by block (all raw blocks,
/// then all time blocks, then all frequency blocks), lead-major within each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_leads: usize,
    pub raw: usize,
    pub time: usize,
    pub freq: usize,
}

impl FeatureLayout {
    pub fn dims(&self) -> [usize; 3] {
        [
            self.n_leads * self.raw,
            self.n_leads * self.time,
            self.n_leads * self.freq,
        ]
    }

    pub fn total(&self) -> usize {
        self.dims().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, k: usize) -> &[f64] {
        let dims = self.layout.dims();
        let start: usize = dims[..k].iter().sum();
        &self.values[start..start + dims[k]]
    }
}

/// Builds the feature vector of one beat. Statistics are taken on the
/// full-rate lead; only the raw block is downsampled.
pub fn assemble_vector(beat: &BeatTensor, config: &FeatureConfig) -> Result<FeatureVector> {
    config.validate()?;
    if beat.n_leads() != config.n_leads || beat.beat_len() != config.beat_len {
        return Err(Error::Dimension(format!(
            "beat is {}x{}, config expects {}x{}",
            beat.n_leads(),
            beat.beat_len(),
            config.n_leads,
            config.beat_len
        )));
    }
    let layout = config.layout();
    let mut raw = Vec::with_capacity(layout.dims()[0]);
    let mut time = Vec::with_capacity(layout.dims()[1]);
    let mut freq = Vec::with_capacity(layout.dims()[2]);
    for lead in beat.leads() {
        let ds = downsample(lead, config.sample_rate, config.fs_out)?;
        debug_assert_eq!(ds.len(), layout.raw);
        raw.extend(ds);
        time.extend(time_features(lead)?);
        freq.extend(freq_features(
            &fft_spectrum(lead, config.sample_rate)?,
            config.include_z10,
        )?);
    }
    let mut values = raw;
    values.extend(time);
    values.extend(freq);
    ensure_finite(&values, "feature vector")?;
    Ok(FeatureVector { values, layout })
}

/// Row per beat, in input order.
pub fn feature_matrix(beats: &[BeatTensor], config: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    beats
        .par_iter()
        .map(|b| assemble_vector(b, config).map(|v| v.values))
        .collect()
}
