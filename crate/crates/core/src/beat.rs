//! Segmented heartbeat container.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Diagnostic class id. The first five values are the PTB-XL superclasses;
/// any other value is a synthetic or user-defined class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub u32);

impl ClassId {
    pub const NORM: ClassId = ClassId(0);
    pub const MI: ClassId = ClassId(1);
    pub const STTC: ClassId = ClassId(2);
    pub const CD: ClassId = ClassId(3);
    pub const HYP: ClassId = ClassId(4);

    pub fn name(self) -> String {
        match self.0 {
            0 => "NORM".into(),
            1 => "MI".into(),
            2 => "STTC".into(),
            3 => "CD".into(),
            4 => "HYP".into(),
            n => format!("C{n}"),
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub const MIN_BEAT_LEN: usize = 8;

/// One heartbeat: `n_leads` rows of `beat_len` samples (millivolts), stored
/// row-major by lead.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatTensor {
    samples: Vec<f64>,
    n_leads: usize,
    beat_len: usize,
    pub label: ClassId,
    pub sample_rate: f64,
    pub source_id: String,
}

impl BeatTensor {
    pub fn new(
        samples: Vec<f64>,
        n_leads: usize,
        label: ClassId,
        sample_rate: f64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if n_leads == 0 {
            return Err(Error::InvalidParam("beat needs at least one lead".into()));
        }
        if samples.len() % n_leads != 0 {
            return Err(Error::Dimension(format!(
                "{} samples do not split into {n_leads} leads",
                samples.len()
            )));
        }
        let beat_len = samples.len() / n_leads;
        if beat_len < MIN_BEAT_LEN {
            return Err(Error::InvalidParam(format!(
                "beat_len {beat_len} < {MIN_BEAT_LEN}"
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidParam(format!("sample rate {sample_rate}")));
        }
        ensure_finite(&samples, "beat samples")?;
        Ok(Self {
            samples,
            n_leads,
            beat_len,
            label,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn from_leads(
        leads: &[Vec<f64>],
        label: ClassId,
        sample_rate: f64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let len = leads.first().map_or(0, Vec::len);
        if leads.iter().any(|l| l.len() != len) {
            return Err(Error::Dimension("leads of unequal length".into()));
        }
        Self::new(leads.concat(), leads.len(), label, sample_rate, source_id)
    }

    pub fn n_leads(&self) -> usize {
        self.n_leads
    }

    pub fn beat_len(&self) -> usize {
        self.beat_len
    }

    pub fn lead(&self, i: usize) -> &[f64] {
        &self.samples[i * self.beat_len..(i + 1) * self.beat_len]
    }

    pub fn leads(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.beat_len)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn same_shape(&self, other: &BeatTensor) -> bool {
        self.n_leads == other.n_leads && self.beat_len == other.beat_len
    }

    pub fn with_label(mut self, label: ClassId) -> Self {
        self.label = label;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_and_non_finite() {
        assert!(BeatTensor::new(vec![0.0; 7], 1, ClassId::NORM, 100.0, "a").is_err());
        let mut s = vec![0.0; 16];
        s[3] = f64::NAN;
        assert!(BeatTensor::new(s, 1, ClassId::NORM, 100.0, "a").is_err());
        assert!(BeatTensor::new(vec![0.0; 17], 2, ClassId::NORM, 100.0, "a").is_err());
    }

    #[test]
    fn lead_views() {
        let b = BeatTensor::from_leads(
            &[vec![1.0; 8], vec![2.0; 8]],
            ClassId::MI,
            100.0,
            "p1",
        )
        .unwrap();
        assert_eq!(b.n_leads(), 2);
        assert_eq!(b.lead(1), &[2.0; 8]);
        assert_eq!(b.leads().count(), 2);
        assert_eq!(ClassId::MI.to_string(), "MI");
        assert_eq!(ClassId(9).to_string(), "C9");
    }
}
