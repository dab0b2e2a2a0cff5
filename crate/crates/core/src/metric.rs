//! Beat-shape ground metric.
//!
//! Each lead of a beat is shifted above zero and normalized into a density
//! over time. Two such densities are compared with the squared-distance
//! transport cost on `[0, 1]`, which in one dimension is the squared L2
//! distance between quantile functions. Beats are compared lead by lead and
//! the per-lead costs summed.

use ndarray::Array2;
use rayon::prelude::*;

use crate::beat::{BeatTensor, ClassId};
use crate::density::{merge_quantiles, DensityOnGrid};
use crate::error::{ensure_finite, Error, Result};
use crate::ot::{CostMatrix, MetricTag};

/// Floor added to every sample, as a fraction of the lead's range.
pub const FLOOR_ETA: f64 = 1e-3;

/// Turns one lead into a strictly positive density on a grid with one node
/// per sample.
pub fn to_density(lead: &[f64]) -> Result<DensityOnGrid> {
    if lead.len() < 2 {
        return Err(Error::InvalidParam(format!("lead length {} < 2", lead.len())));
    }
    ensure_finite(lead, "lead samples")?;
    let min = lead.iter().copied().fold(f64::INFINITY, f64::min);
    let max = lead.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let n = lead.len() as f64;
    if range == 0.0 {
        // Nothing above baseline: uniform shape, negligible scale so the
        // inverse map returns the constant exactly.
        return DensityOnGrid::new(vec![1.0 / n; lead.len()], min, f64::MIN_POSITIVE);
    }
    let floor = FLOOR_ETA * range / n;
    let shifted: Vec<f64> = lead.iter().map(|x| x - min + floor).collect();
    let z: f64 = shifted.iter().sum();
    let mut mass: Vec<f64> = shifted.iter().map(|s| s / z).collect();
    // absorb the rounding residue so the unit-mass check is tight
    let residue = 1.0 - mass.iter().sum::<f64>();
    let top = mass
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    mass[top] += residue;
    // offset chosen so that offset + scale·mass reproduces the lead exactly
    DensityOnGrid::new(mass, min - floor, z)
}

/// Squared-distance transport cost between two densities on `[0, 1]`,
/// `∫₀¹ (F⁻¹(q) − G⁻¹(q))² dq`, evaluated exactly for the piecewise-linear
/// quantile functions. Grids may differ in length.
pub fn w2_1d(mu: &DensityOnGrid, nu: &DensityOnGrid) -> f64 {
    let mut total = 0.0;
    merge_quantiles(
        &mu.quantile_pieces(),
        &nu.quantile_pieces(),
        |q0, q1, a0, a1, b0, b1| {
            let d0 = a0 - b0;
            let d1 = a1 - b1;
            total += (q1 - q0) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
        },
    );
    total.max(0.0)
}

/// Displacement interpolation: the quantile function of the result is
/// `(1 − α) F⁻¹ + α G⁻¹`, re-binned onto `mu`'s grid. Offset and scale are
/// interpolated linearly.
///
/// Re-binning keeps the exact mass of every cell and then restores each
/// cell's first moment with a dipole on its two neighbours, so transport
/// costs measured from the result are accurate to second order in the grid
/// spacing. On cell-aligned inputs (either endpoint) the correction is zero.
pub fn quantile_interpolate(
    mu: &DensityOnGrid,
    nu: &DensityOnGrid,
    alpha: f64,
) -> Result<DensityOnGrid> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam(format!("alpha {alpha} outside [0, 1]")));
    }
    let g = mu.grid_len();
    let h = mu.spacing();
    let mut mass = vec![0.0; g];
    let mut moment = vec![0.0; g];
    let bin_of = |y: f64| ((y / h + 0.5).floor().max(0.0) as usize).min(g - 1);
    merge_quantiles(
        &mu.quantile_pieces(),
        &nu.quantile_pieces(),
        |q0, q1, a0, a1, b0, b1| {
            let piece_mass = q1 - q0;
            let y0 = (1.0 - alpha) * a0 + alpha * b0;
            let y1 = (1.0 - alpha) * a1 + alpha * b1;
            let width = y1 - y0;
            if width <= 1e-14 {
                let y = 0.5 * (y0 + y1);
                let k = bin_of(y);
                mass[k] += piece_mass;
                moment[k] += piece_mass * y;
                return;
            }
            let (first, last) = (bin_of(y0), bin_of(y1));
            for k in first..=last {
                let lo = if k == first { y0 } else { (k as f64 - 0.5) * h };
                let hi = if k == last { y1 } else { (k as f64 + 0.5) * h };
                if hi > lo {
                    let part = piece_mass * (hi - lo) / width;
                    mass[k] += part;
                    moment[k] += part * 0.5 * (lo + hi);
                }
            }
        },
    );

    let mut out = mass.clone();
    for c in 0..g {
        let excess = moment[c] - mass[c] * c as f64 * h;
        let (lo, hi) = (c.saturating_sub(1), (c + 1).min(g - 1));
        let shift = excess / ((hi - lo) as f64 * h);
        out[hi] += shift;
        out[lo] -= shift;
    }
    out.iter_mut().for_each(|m| *m = m.max(0.0));
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|m| *m /= total);
    DensityOnGrid::new(
        out,
        (1.0 - alpha) * mu.offset + alpha * nu.offset,
        (1.0 - alpha) * mu.scale + alpha * nu.scale,
    )
}

/// Inverse of [`to_density`] for a single lead: density heights are resampled
/// to `target_len` points, rescaled by the stored mass and shifted back.
pub fn density_to_lead(density: &DensityOnGrid, target_len: usize) -> Result<Vec<f64>> {
    if target_len < 2 {
        return Err(Error::InvalidParam(format!("target_len {target_len} < 2")));
    }
    let g = density.grid_len();
    let m = density.mass();
    let per_sample = density.scale * g as f64 / target_len as f64;
    Ok((0..target_len)
        .map(|k| {
            let t = k as f64 * (g - 1) as f64 / (target_len - 1) as f64;
            let i = (t.floor() as usize).min(g - 2);
            let frac = t - i as f64;
            let height = m[i] * (1.0 - frac) + m[i + 1] * frac;
            height * per_sample + density.offset
        })
        .collect())
}

pub fn density_to_beat(
    densities: &[DensityOnGrid],
    target_len: usize,
    label: ClassId,
    sample_rate: f64,
    source_id: impl Into<String>,
) -> Result<BeatTensor> {
    let Some(first) = densities.first() else {
        return Err(Error::InvalidParam("no lead densities".into()));
    };
    if densities.iter().any(|d| d.grid_len() != first.grid_len()) {
        return Err(Error::Dimension("lead densities on different grids".into()));
    }
    let leads = densities
        .iter()
        .map(|d| density_to_lead(d, target_len))
        .collect::<Result<Vec<_>>>()?;
    BeatTensor::from_leads(&leads, label, sample_rate, source_id)
}

/// Linear interpolation of `x` onto `n` evenly spaced points spanning the
/// same interval.
pub fn resample_linear(x: &[f64], n: usize) -> Vec<f64> {
    if x.len() == n || x.len() < 2 || n < 2 {
        return if x.len() == n { x.to_vec() } else { vec![x.first().copied().unwrap_or(0.0); n] };
    }
    (0..n)
        .map(|k| {
            let t = k as f64 * (x.len() - 1) as f64 / (n - 1) as f64;
            let i = (t.floor() as usize).min(x.len() - 2);
            let frac = t - i as f64;
            x[i] * (1.0 - frac) + x[i + 1] * frac
        })
        .collect()
}

pub fn beat_densities(beat: &BeatTensor) -> Result<Vec<DensityOnGrid>> {
    beat.leads().map(to_density).collect()
}

/// Sum over leads of [`w2_1d`], optionally weighted per lead.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShapeMetric {
    pub lead_weights: Option<Vec<f64>>,
    /// Resample every lead to this many grid nodes before turning it into a
    /// density; `None` keeps one node per sample.
    pub grid_len: Option<usize>,
}

impl ShapeMetric {
    pub fn weighted(lead_weights: Vec<f64>) -> Self {
        Self {
            lead_weights: Some(lead_weights),
            grid_len: None,
        }
    }

    pub fn on_grid(grid_len: usize) -> Self {
        Self {
            lead_weights: None,
            grid_len: Some(grid_len),
        }
    }

    /// Per-lead densities of `beat` on this metric's grid.
    pub fn densities(&self, beat: &BeatTensor) -> Result<Vec<DensityOnGrid>> {
        match self.grid_len {
            Some(g) if g != beat.beat_len() => {
                if g < 2 {
                    return Err(Error::InvalidParam(format!("grid_len {g} < 2")));
                }
                beat.leads().map(|l| to_density(&resample_linear(l, g))).collect()
            }
            _ => beat_densities(beat),
        }
    }

    fn weight(&self, lead: usize) -> f64 {
        self.lead_weights
            .as_ref()
            .and_then(|w| w.get(lead).copied())
            .unwrap_or(1.0)
    }

    /// Identifier folded into cost-cache digests.
    pub fn describe(&self) -> String {
        let mut s = format!("beat-shape;eta={FLOOR_ETA}");
        if let Some(g) = self.grid_len {
            s += &format!(";grid={g}");
        }
        if let Some(w) = &self.lead_weights {
            s += &format!(";weights={w:?}");
        }
        s
    }

    fn check_weights(&self, n_leads: usize) -> Result<()> {
        if let Some(w) = &self.lead_weights {
            if w.len() != n_leads {
                return Err(Error::Dimension(format!(
                    "{} lead weights for {n_leads} leads",
                    w.len()
                )));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidParam("lead weights must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn density_distance(&self, x: &[DensityOnGrid], y: &[DensityOnGrid]) -> f64 {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(l, (a, b))| self.weight(l) * w2_1d(a, b))
            .sum()
    }

    pub fn distance(&self, x: &BeatTensor, y: &BeatTensor) -> Result<f64> {
        if x.n_leads() != y.n_leads() {
            return Err(Error::Dimension(format!(
                "lead counts {} and {}",
                x.n_leads(),
                y.n_leads()
            )));
        }
        self.check_weights(x.n_leads())?;
        Ok(self.density_distance(&self.densities(x)?, &self.densities(y)?))
    }

    /// Cost matrix between two batches. Entries are computed independently in
    /// parallel, so the result does not depend on the thread count.
    pub fn pairwise(&self, batch_a: &[BeatTensor], batch_b: &[BeatTensor]) -> Result<CostMatrix> {
        if batch_a.is_empty() || batch_b.is_empty() {
            return Err(Error::InvalidParam("empty batch".into()));
        }
        let leads = batch_a[0].n_leads();
        if batch_a.iter().chain(batch_b).any(|b| b.n_leads() != leads) {
            return Err(Error::Dimension("mixed lead counts in batch".into()));
        }
        self.check_weights(leads)?;
        let da = batch_a.iter().map(|b| self.densities(b)).collect::<Result<Vec<_>>>()?;
        let db = batch_b.iter().map(|b| self.densities(b)).collect::<Result<Vec<_>>>()?;
        self.pairwise_densities(&da, &db)
    }

    /// [`ShapeMetric::pairwise`] on beats already converted to densities.
    pub fn pairwise_densities(
        &self,
        da: &[Vec<DensityOnGrid>],
        db: &[Vec<DensityOnGrid>],
    ) -> Result<CostMatrix> {
        if da.is_empty() || db.is_empty() {
            return Err(Error::InvalidParam("empty batch".into()));
        }
        let m = db.len();
        let flat: Vec<f64> = (0..da.len() * m)
            .into_par_iter()
            .map(|k| self.density_distance(&da[k / m], &db[k % m]))
            .collect();
        let matrix = Array2::from_shape_vec((da.len(), m), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        CostMatrix::new(matrix, MetricTag::BeatShape)
    }
}

pub fn beat_distance(x: &BeatTensor, y: &BeatTensor) -> Result<f64> {
    ShapeMetric::default().distance(x, y)
}

pub fn pairwise_cost(batch_a: &[BeatTensor], batch_b: &[BeatTensor]) -> Result<CostMatrix> {
    ShapeMetric::default().pairwise(batch_a, batch_b)
}
