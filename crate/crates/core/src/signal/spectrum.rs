use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{ensure_finite, Error, Result};

/// One-sided magnitude spectrum: `magnitudes[k] = |X_k|` (unnormalized DFT)
/// at `freqs[k] = k · fs / N`, for `k = 0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumView {
    pub magnitudes: Vec<f64>,
    pub freqs: Vec<f64>,
}

impl SpectrumView {
    pub fn new(magnitudes: Vec<f64>, freqs: Vec<f64>) -> Result<Self> {
        if magnitudes.len() != freqs.len() {
            return Err(Error::Dimension(format!(
                "{} magnitudes vs {} frequencies",
                magnitudes.len(),
                freqs.len()
            )));
        }
        ensure_finite(&magnitudes, "spectrum")?;
        ensure_finite(&freqs, "spectrum frequencies")?;
        if magnitudes.iter().any(|&m| m < 0.0) {
            return Err(Error::InvalidParam("negative magnitude".into()));
        }
        Ok(Self { magnitudes, freqs })
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }
}

pub fn fft_spectrum(signal: &[f64], sample_rate: f64) -> Result<SpectrumView> {
    if signal.len() < 2 {
        return Err(Error::InvalidParam("spectrum needs at least 2 samples".into()));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidParam(format!("sample rate {sample_rate}")));
    }
    ensure_finite(signal, "fft_spectrum input")?;
    let n = signal.len();
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    Ok(SpectrumView {
        magnitudes: buf[..bins].iter().map(|c| c.norm()).collect(),
        freqs: (0..bins).map(|k| k as f64 * sample_rate / n as f64).collect(),
    })
}
