//! Browser bindings for three small demos: geodesic vs linear interpolation
//! of two beats, the powerline notch response, and the shape distance
//! between two displaced QRS complexes.

use geoaug::metric::{density_to_lead, quantile_interpolate, to_density, w2_1d};
use geoaug::signal::{Biquad, LeadWaves};
use geoaug::{Error, Result};
use wasm_bindgen::prelude::*;

/// Samples per demo beat (one second at 250 Hz).
pub const BEAT_LEN: usize = 250;
const FS: f64 = 250.0;

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

fn demo_pair(offset_ms: f64, width_ms: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let half = offset_ms / 2000.0;
    let width = width_ms / 1000.0;
    if !(0.0..0.4).contains(&half) || !(width > 0.0) {
        return Err(Error::InvalidParam(
            "offset must be in [0, 800) ms and width positive".into(),
        ));
    }
    Ok((qrs_beat(0.5 - half, width), qrs_beat(0.5 + half, width)))
}

fn qrs_beat(center_s: f64, width_s: f64) -> Vec<f64> {
    let w = LeadWaves::qrs_only(1.0, center_s, width_s);
    (0..BEAT_LEN).map(|i| w.eval(i as f64 / FS)).collect()
}

/// Two single-QRS beats `offset_ms` apart (centred on 0.5 s) and their
/// interpolants at `alpha`. Returns `[x | y | geodesic | linear]`, each
/// [`BEAT_LEN`] samples.
pub fn interpolation_curves(offset_ms: f64, width_ms: f64, alpha: f64) -> Result<Vec<f64>> {
    let (x, y) = demo_pair(offset_ms, width_ms)?;
    let mid = quantile_interpolate(&to_density(&x)?, &to_density(&y)?, alpha)?;
    let geo = density_to_lead(&mid, BEAT_LEN)?;
    let lin: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect();
    Ok([x, y, geo, lin].concat())
}

#[wasm_bindgen]
pub fn interpolate(
    offset_ms: f64,
    width_ms: f64,
    alpha: f64,
) -> std::result::Result<Vec<f64>, JsError> {
    js(interpolation_curves(offset_ms, width_ms, alpha))
}

/// Magnitude response of the notch in dB at `n_points` frequencies spread
/// evenly over `[0, fs/2]`.
pub fn notch_curve(
    center_hz: f64,
    quality: f64,
    sample_rate: f64,
    n_points: usize,
) -> Result<Vec<f64>> {
    if !(center_hz > 0.0 && center_hz < sample_rate / 2.0) || !(quality > 0.0) || n_points < 2 {
        return Err(Error::InvalidParam(
            "need 0 < centre < fs/2, Q > 0 and at least 2 points".into(),
        ));
    }
    let bq = Biquad::notch(center_hz, quality, sample_rate);
    Ok((0..n_points)
        .map(|k| {
            let f = k as f64 / (n_points - 1) as f64 * sample_rate / 2.0;
            // filtfilt squares the single-pass response
            40.0 * bq.gain(f, sample_rate).max(1e-12).log10()
        })
        .collect())
}

#[wasm_bindgen]
pub fn notch_response_db(
    center_hz: f64,
    quality: f64,
    sample_rate: f64,
    n_points: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    js(notch_curve(center_hz, quality, sample_rate, n_points))
}

/// `[shape distance, euclidean distance]` between two QRS beats
/// `offset_ms` apart.
pub fn distances(offset_ms: f64, width_ms: f64) -> Result<Vec<f64>> {
    let (x, y) = demo_pair(offset_ms, width_ms)?;
    let w = w2_1d(&to_density(&x)?, &to_density(&y)?);
    let l2 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(vec![w.sqrt(), l2])
}

#[wasm_bindgen]
pub fn shape_distance(offset_ms: f64, width_ms: f64) -> std::result::Result<Vec<f64>, JsError> {
    js(distances(offset_ms, width_ms))
}
