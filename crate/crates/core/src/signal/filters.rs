//! Length-preserving filters: centred moving average, second-order IIR
//! sections applied forward and backward, and a windowed-sinc low-pass.

use std::f64::consts::PI;

use crate::error::{ensure_finite, Error, Result};

/// Index into `0..len` with mirror reflection about the end samples
/// (`d c b | a b c d | c b a`).
fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// Centred `n`-point moving average with reflection padding.
pub fn window_filter(signal: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::InvalidParam(format!("window length {n} must be odd and >= 1")));
    }
    if n > signal.len() {
        return Err(Error::InvalidParam(format!(
            "window length {n} exceeds signal length {}",
            signal.len()
        )));
    }
    ensure_finite(signal, "window_filter input")?;
    if n == 1 {
        return Ok(signal.to_vec());
    }
    let half = (n / 2) as isize;
    let len = signal.len();
    let inv = 1.0 / n as f64;
    Ok((0..len as isize)
        .map(|i| {
            (-half..=half)
                .map(|k| signal[reflect(i + k, len)])
                .sum::<f64>()
                * inv
        })
        .collect())
}

/// Normalized biquad, transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `a[0]` is implicitly 1.
    pub a: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    /// Band-reject section with -3 dB bandwidth `center / quality`.
    pub fn notch(center_hz: f64, quality: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * center_hz / sample_rate;
        let alpha = w0.sin() / (2.0 * quality);
        let c = w0.cos();
        Self::from_raw([1.0, -2.0 * c, 1.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    pub fn lowpass(cutoff_hz: f64, quality: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / sample_rate;
        let alpha = w0.sin() / (2.0 * quality);
        let c = w0.cos();
        Self::from_raw(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    pub fn highpass(cutoff_hz: f64, quality: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / sample_rate;
        let alpha = w0.sin() / (2.0 * quality);
        let c = w0.cos();
        Self::from_raw(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn gain(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * c1 + self.b[2] * c2,
            self.b[1] * s1 + self.b[2] * s2,
        );
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }

    /// State that makes a constant input of 1 produce a constant output.
    fn step_state(&self) -> [f64; 2] {
        let dc = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let z2 = self.b[2] - self.a[1] * dc;
        let z1 = dc - self.b[0];
        [z1, z2]
    }

    fn run(&self, x: &[f64], state: [f64; 2]) -> Vec<f64> {
        let [mut z1, mut z2] = state;
        x.iter()
            .map(|&v| {
                let y = self.b[0] * v + z1;
                z1 = self.b[1] * v - self.a[0] * y + z2;
                z2 = self.b[2] * v - self.a[1] * y;
                y
            })
            .collect()
    }

    /// Zero-phase application: odd-extension padding, steady-state initial
    /// conditions, forward pass, backward pass.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        if x.len() < 2 {
            return x.to_vec();
        }
        let pad = (x.len() - 1).min(27);
        let first = x[0];
        let last = x[x.len() - 1];
        let mut ext = Vec::with_capacity(x.len() + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[x.len() - 1 - i]));

        let zi = self.step_state();
        let fwd = self.run(&ext, [zi[0] * ext[0], zi[1] * ext[0]]);
        let rev: Vec<f64> = fwd.into_iter().rev().collect();
        let back = self.run(&rev, [zi[0] * rev[0], zi[1] * rev[0]]);
        let mut out: Vec<f64> = back.into_iter().rev().collect();
        out.drain(..pad);
        out.truncate(x.len());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotchSpec {
    pub center_hz: f64,
    pub quality: f64,
    pub sample_rate: f64,
}

impl NotchSpec {
    /// 50 Hz powerline, Q = 30.
    pub fn powerline(sample_rate: f64) -> Self {
        Self {
            center_hz: 50.0,
            quality: 30.0,
            sample_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(Error::InvalidParam(format!("sample rate {}", self.sample_rate)));
        }
        if !(self.center_hz > 0.0 && self.center_hz < self.sample_rate / 2.0) {
            return Err(Error::InvalidParam(format!(
                "notch centre {} Hz must lie in (0, {}) Hz",
                self.center_hz,
                self.sample_rate / 2.0
            )));
        }
        if !(self.quality > 0.0) {
            return Err(Error::InvalidParam(format!("quality {}", self.quality)));
        }
        Ok(())
    }

    pub fn biquad(&self) -> Biquad {
        Biquad::notch(self.center_hz, self.quality, self.sample_rate)
    }
}

pub const MIN_NOTCH_LEN: usize = 16;

pub fn notch_filter(signal: &[f64], spec: &NotchSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if signal.len() < MIN_NOTCH_LEN {
        return Err(Error::InvalidParam(format!(
            "notch needs >= {MIN_NOTCH_LEN} samples, got {}",
            signal.len()
        )));
    }
    ensure_finite(signal, "notch_filter input")?;
    Ok(spec.biquad().filtfilt(signal))
}

/// Symmetric Hamming-windowed sinc low-pass with unit DC gain.
/// `cutoff` is a fraction of the sample rate.
pub(crate) fn lowpass_taps(cutoff: f64, half_len: usize) -> Vec<f64> {
    let n = 2 * half_len + 1;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let k = i as f64 - half_len as f64;
            let sinc = if k == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * k).sin() / (PI * k)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

pub(crate) fn convolve_same(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let len = signal.len();
    (0..len as isize)
        .map(|i| {
            taps.iter()
                .enumerate()
                .map(|(k, t)| t * signal[reflect(i + k as isize - half, len)])
                .sum()
        })
        .collect()
}

/// Anti-aliased decimation by the integer ratio `fs_in / fs_out`.
pub fn downsample(signal: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>> {
    if !(fs_in > 0.0 && fs_out > 0.0) {
        return Err(Error::InvalidParam("sample rates must be > 0".into()));
    }
    let ratio_f = fs_in / fs_out;
    let ratio = ratio_f.round();
    if ratio < 1.0 || (ratio_f - ratio).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!(
            "{fs_in} Hz is not an integer multiple of {fs_out} Hz"
        )));
    }
    ensure_finite(signal, "downsample input")?;
    let ratio = ratio as usize;
    if ratio == 1 || signal.is_empty() {
        return Ok(signal.to_vec());
    }
    let taps = lowpass_taps(0.45 / ratio as f64, 8 * ratio);
    let filtered = if signal.len() > 1 {
        convolve_same(signal, &taps)
    } else {
        signal.to_vec()
    };
    Ok(filtered.into_iter().step_by(ratio).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn window_filter_cases() {
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.7 - 1.0).collect();
        assert_eq!(window_filter(&x, 1).unwrap(), x);
        let c = vec![3.5; 12];
        for y in window_filter(&c, 5).unwrap() {
            assert!((y - 3.5).abs() < 1e-12);
        }
        let mut imp = vec![0.0; 11];
        imp[5] = 1.0;
        let y = window_filter(&imp, 5).unwrap();
        for (i, v) in y.iter().enumerate() {
            let want = if (3..=7).contains(&i) { 0.2 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "{i}: {v}");
        }
        assert!(window_filter(&x, 4).is_err());
        assert!(window_filter(&x, 11).is_err());
    }

    #[test]
    fn notch_attenuates_tone() {
        let fs = 500.0;
        let spec = NotchSpec::powerline(fs);
        let x = sine(50.0, fs, 5000);
        let y = notch_filter(&x, &spec).unwrap();
        let mid = 1500..3500;
        let db = 20.0 * (rms(&y[mid.clone()]) / rms(&x[mid])).log10();
        assert!(db <= -30.0, "{db} dB");
    }

    #[test]
    fn notch_passes_low_frequency_and_dc() {
        let fs = 500.0;
        let spec = NotchSpec::powerline(fs);
        let x = sine(5.0, fs, 5000);
        let y = notch_filter(&x, &spec).unwrap();
        let mid = 1500..3500;
        let ratio = rms(&y[mid.clone()]) / rms(&x[mid]);
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
        // analytic response, squared for the two passes
        let g = spec.biquad().gain(5.0, fs).powi(2);
        assert!((g - 1.0).abs() < 0.01);
        assert!((spec.biquad().gain(0.0, fs) - 1.0).abs() < 1e-12);

        let c = vec![2.5; 400];
        for v in notch_filter(&c, &spec).unwrap() {
            assert!((v - 2.5).abs() < 1e-6);
        }
    }

    #[test]
    fn notch_rejects_bad_spec() {
        let x = vec![0.0; 64];
        assert!(notch_filter(&x, &NotchSpec::powerline(100.0)).is_err());
        assert!(notch_filter(&x[..8], &NotchSpec::powerline(500.0)).is_err());
        let bad_q = NotchSpec {
            quality: 0.0,
            ..NotchSpec::powerline(500.0)
        };
        assert!(notch_filter(&x, &bad_q).is_err());
    }

    #[test]
    fn notch_is_zero_phase() {
        let fs = 500.0;
        let x = sine(7.0, fs, 3000);
        let y = notch_filter(&x, &NotchSpec::powerline(fs)).unwrap();
        let seg = 1000..2000;
        let xcorr = |lag: isize| -> f64 {
            seg.clone()
                .map(|i| x[i] * y[(i as isize + lag) as usize])
                .sum()
        };
        let best = (-10..=10).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn downsample_lengths_and_constants() {
        let c = vec![1.25; 100];
        let y = downsample(&c, 100.0, 50.0).unwrap();
        assert_eq!(y.len(), 50);
        assert!(y.iter().all(|v| (v - 1.25).abs() < 1e-12));
        assert_eq!(downsample(&vec![0.0; 101], 100.0, 50.0).unwrap().len(), 51);
        assert!(downsample(&c, 100.0, 30.0).is_err());
        assert_eq!(downsample(&c, 100.0, 100.0).unwrap(), c);
    }
}
