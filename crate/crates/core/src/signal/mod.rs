//! Preprocessing chain for raw multi-lead records.

pub mod filters;
pub mod peaks;
pub mod spectrum;
pub mod synth;

pub use filters::{downsample, notch_filter, window_filter, Biquad, NotchSpec};
pub use peaks::{detect_r_peaks, dominant_peaks};
pub use spectrum::{fft_spectrum, SpectrumView};
pub use synth::{synth_beat, synth_record, Bump, LeadWaves, SynthBeatParams, SynthRecordParams};

use crate::beat::{BeatTensor, ClassId};
use crate::error::{ensure_finite, Error, Result};

/// A continuous multi-lead recording, row-major by lead.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    samples: Vec<f64>,
    n_leads: usize,
    pub sample_rate: f64,
    pub record_id: String,
}

impl RawRecord {
    pub fn new(
        samples: Vec<f64>,
        n_leads: usize,
        sample_rate: f64,
        record_id: impl Into<String>,
    ) -> Result<Self> {
        if n_leads == 0 || samples.len() % n_leads != 0 {
            return Err(Error::Dimension(format!(
                "{} samples for {n_leads} leads",
                samples.len()
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidParam(format!("sample rate {sample_rate}")));
        }
        ensure_finite(&samples, "record samples")?;
        Ok(Self {
            samples,
            n_leads,
            sample_rate,
            record_id: record_id.into(),
        })
    }

    pub fn n_leads(&self) -> usize {
        self.n_leads
    }

    /// Samples per lead.
    pub fn len(&self) -> usize {
        self.samples.len() / self.n_leads
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn lead(&self, i: usize) -> &[f64] {
        let len = self.len();
        &self.samples[i * len..(i + 1) * len]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Applies `f` to every lead.
    pub fn map_leads(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<RawRecord> {
        let mut out = Vec::with_capacity(self.samples.len());
        for l in 0..self.n_leads {
            let y = f(self.lead(l))?;
            if y.len() != self.len() {
                return Err(Error::Dimension("filter changed lead length".into()));
            }
            out.extend(y);
        }
        RawRecord::new(out, self.n_leads, self.sample_rate, self.record_id.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub beats: Vec<BeatTensor>,
    pub dropped: usize,
}

/// Cuts `[p − pre, p + post)` around every R peak. A peak is kept when
/// `p ≥ pre` and `p + post < len`; the rest are counted as dropped.
pub fn segment_beats(
    record: &RawRecord,
    r_peaks: &[usize],
    pre_samples: usize,
    post_samples: usize,
    label: ClassId,
) -> Result<Segmentation> {
    if pre_samples == 0 || post_samples == 0 {
        return Err(Error::InvalidParam("pre/post must be >= 1".into()));
    }
    let len = record.len();
    let mut beats = Vec::new();
    let mut dropped = 0;
    for &p in r_peaks {
        if p < pre_samples || p + post_samples >= len {
            dropped += 1;
            continue;
        }
        let leads: Vec<Vec<f64>> = (0..record.n_leads())
            .map(|l| record.lead(l)[p - pre_samples..p + post_samples].to_vec())
            .collect();
        beats.push(BeatTensor::from_leads(
            &leads,
            label,
            record.sample_rate,
            record.record_id.clone(),
        )?);
    }
    Ok(Segmentation { beats, dropped })
}

/// Moving-average smoothing followed by the powerline notch. The notch is
/// skipped when its centre is not below Nyquist (e.g. 50 Hz at 100 Hz).
pub fn preprocess_record(
    record: &RawRecord,
    window_n: usize,
    notch: Option<NotchSpec>,
) -> Result<RawRecord> {
    let smoothed = record.map_leads(|x| window_filter(x, window_n))?;
    match notch {
        Some(spec) if spec.center_hz < record.sample_rate / 2.0 => {
            smoothed.map_leads(|x| notch_filter(x, &spec))
        }
        _ => Ok(smoothed),
    }
}
