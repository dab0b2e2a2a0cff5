//! R-peak detection (band-pass, derivative, squaring, moving-window
//! integration, adaptive thresholds with search-back) and a prominence-based
//! peak counter.

use super::filters::{window_filter, Biquad};
use crate::error::{ensure_finite, Error, Result};

pub const REFRACTORY_S: f64 = 0.2;
const INTEGRATION_S: f64 = 0.15;
const REFINE_S: f64 = 0.08;

fn band_pass(x: &[f64], fs: f64) -> Vec<f64> {
    let q = std::f64::consts::FRAC_1_SQRT_2;
    let hp = Biquad::highpass(5.0, q, fs).filtfilt(x);
    if 15.0 < 0.45 * fs {
        Biquad::lowpass(15.0, q, fs).filtfilt(&hp)
    } else {
        hp
    }
}

fn derivative(x: &[f64]) -> Vec<f64> {
    let n = x.len() as isize;
    let at = |i: isize| x[i.clamp(0, n - 1) as usize];
    (0..n)
        .map(|i| (2.0 * at(i + 1) + at(i + 2) - at(i - 2) - 2.0 * at(i - 1)) / 8.0)
        .collect()
}

/// Local maxima of `x` that are also the largest value within `radius`
/// samples on either side.
fn isolated_maxima(x: &[f64], radius: usize) -> Vec<usize> {
    let n = x.len();
    (0..n)
        .filter(|&i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(n - 1);
            x[i] > 0.0
                && (lo..=hi).all(|j| x[j] < x[i] || (x[j] == x[i] && j >= i))
        })
        .collect()
}

pub fn detect_r_peaks(lead: &[f64], sample_rate: f64) -> Result<Vec<usize>> {
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidParam(format!("sample rate {sample_rate}")));
    }
    if (lead.len() as f64) < 2.0 * sample_rate {
        return Err(Error::InvalidParam(format!(
            "R-peak detection needs >= 2 s of signal, got {} samples at {sample_rate} Hz",
            lead.len()
        )));
    }
    ensure_finite(lead, "detect_r_peaks input")?;

    let bp = band_pass(lead, sample_rate);
    let energy: Vec<f64> = derivative(&bp).iter().map(|d| d * d).collect();
    let win = ((INTEGRATION_S * sample_rate).round() as usize) | 1;
    let mwi = window_filter(&energy, win.min(energy.len() | 1).min(energy.len()))?;
    let peak_max = mwi.iter().copied().fold(0.0, f64::max);
    if !(peak_max > 0.0) {
        return Ok(Vec::new());
    }

    let refractory = (REFRACTORY_S * sample_rate).round() as usize;
    let candidates: Vec<usize> = isolated_maxima(&mwi, refractory)
        .into_iter()
        .filter(|&i| mwi[i] > 1e-9 * peak_max)
        .collect();

    let mean = mwi.iter().sum::<f64>() / mwi.len() as f64;
    let mut spki = peak_max / 3.0;
    let mut npki = 0.5 * mean;
    let mut accepted: Vec<usize> = Vec::new();
    let mut skipped: Vec<usize> = Vec::new();
    let mut rr_recent: Vec<f64> = Vec::new();

    for &c in &candidates {
        let threshold = npki + 0.25 * (spki - npki);
        // search-back for a missed beat when the gap grows too long
        if let (Some(&last), false) = (accepted.last(), rr_recent.is_empty()) {
            let rr_avg = rr_recent.iter().sum::<f64>() / rr_recent.len() as f64;
            if (c - last) as f64 > 1.66 * rr_avg {
                if let Some(&best) = skipped
                    .iter()
                    .filter(|&&s| s > last + refractory && c > s + refractory)
                    .max_by(|&&a, &&b| mwi[a].total_cmp(&mwi[b]))
                {
                    if mwi[best] > 0.5 * threshold {
                        spki = 0.25 * mwi[best] + 0.75 * spki;
                        rr_recent.push((best - last) as f64);
                        accepted.push(best);
                    }
                }
            }
        }
        if mwi[c] > threshold {
            spki = 0.125 * mwi[c] + 0.875 * spki;
            if let Some(&last) = accepted.last() {
                rr_recent.push((c - last) as f64);
                if rr_recent.len() > 8 {
                    rr_recent.remove(0);
                }
            }
            accepted.push(c);
            skipped.clear();
        } else {
            npki = 0.125 * mwi[c] + 0.875 * npki;
            skipped.push(c);
        }
    }

    // Snap to the largest band-passed excursion near each integration peak.
    let reach = (REFINE_S * sample_rate).round() as usize;
    let mut peaks: Vec<usize> = accepted
        .iter()
        .map(|&c| {
            let lo = c.saturating_sub(reach);
            let hi = (c + reach).min(lead.len() - 1);
            (lo..=hi)
                .max_by(|&a, &b| bp[a].abs().total_cmp(&bp[b].abs()))
                .unwrap_or(c)
        })
        .collect();
    peaks.sort_unstable();
    let mut out: Vec<usize> = Vec::with_capacity(peaks.len());
    for p in peaks {
        match out.last_mut() {
            Some(last) if p < *last + refractory => {
                if bp[p].abs() > bp[*last].abs() {
                    *last = p;
                }
            }
            _ => out.push(p),
        }
    }
    Ok(out)
}

/// Local maxima whose topographic prominence is at least `rel_prominence`
/// times the signal's range (`max − min`). End samples are never peaks.
pub fn dominant_peaks(signal: &[f64], rel_prominence: f64) -> Vec<usize> {
    let n = signal.len();
    if n < 3 {
        return Vec::new();
    }
    let max = signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = signal.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if !(range > 0.0) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if signal[i] <= signal[i - 1] {
            i += 1;
            continue;
        }
        // walk over a plateau
        let mut j = i;
        while j + 1 < n && signal[j + 1] == signal[i] {
            j += 1;
        }
        if j + 1 >= n || signal[j + 1] > signal[i] {
            i = j + 1;
            continue;
        }
        let v = signal[i];
        let mut left_min = v;
        for k in (0..i).rev() {
            if signal[k] > v {
                break;
            }
            left_min = left_min.min(signal[k]);
        }
        let mut right_min = v;
        for &s in &signal[j + 1..] {
            if s > v {
                break;
            }
            right_min = right_min.min(s);
        }
        if v - left_min.max(right_min) >= rel_prominence * range {
            out.push((i + j) / 2);
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::synth::{synth_record, LeadWaves, SynthRecordParams};

    #[test]
    fn flat_signal_has_no_peaks() {
        assert!(detect_r_peaks(&vec![0.0; 500], 100.0).unwrap().is_empty());
        assert!(detect_r_peaks(&vec![0.0; 150], 100.0).is_err());
    }

    #[test]
    fn single_beat() {
        let fs = 100.0;
        let p = 130;
        let w = LeadWaves::sinus();
        let x: Vec<f64> = (0..300)
            .map(|i| w.eval((i as f64 - p as f64) / fs))
            .collect();
        let peaks = detect_r_peaks(&x, fs).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!(peaks[0].abs_diff(p) <= 3);
    }

    #[test]
    fn finds_every_beat_at_75_bpm() {
        let (rec, truth) = synth_record(&SynthRecordParams::sinus(2, 75.0, 11)).unwrap();
        let found = detect_r_peaks(rec.lead(1), rec.sample_rate).unwrap();
        assert_eq!(found.len(), truth.len());
        for (f, t) in found.iter().zip(&truth) {
            assert!(f.abs_diff(*t) <= 3);
        }
        assert!(found.windows(2).all(|w| w[1] - w[0] >= 20));
    }

    #[test]
    fn prominence_counts() {
        let one: Vec<f64> = (0..50).map(|i| (-(i as f64 - 25.0).powi(2) / 8.0).exp()).collect();
        assert_eq!(dominant_peaks(&one, 0.3), vec![25]);
        let two: Vec<f64> = (0..50)
            .map(|i| {
                let t = i as f64;
                (-(t - 15.0).powi(2) / 8.0).exp() + (-(t - 35.0).powi(2) / 8.0).exp()
            })
            .collect();
        assert_eq!(dominant_peaks(&two, 0.3).len(), 2);
        assert!(dominant_peaks(&[1.0; 10], 0.3).is_empty());
    }
}
