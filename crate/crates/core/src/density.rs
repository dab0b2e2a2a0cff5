//! Nonnegative unit-mass vectors on a uniform grid over `[0, 1]`.
//!
//! Node `i` of a `G`-point grid sits at `i / (G - 1)` and owns the cell of
//! width `h = 1 / (G - 1)` centred on it. Inside a cell the mass is spread
//! uniformly, so the CDF is piecewise linear and the quantile function is
//! piecewise linear on `[0, 1]`. That continuous reading is what the 1-D
//! transport formulas in [`crate::metric`] integrate against.

use crate::error::{Error, Result};

pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityOnGrid {
    mass: Vec<f64>,
    /// Baseline subtracted from the signal before normalization.
    pub offset: f64,
    /// Total pre-normalization mass, in signal units.
    pub scale: f64,
}

impl DensityOnGrid {
    pub fn new(mass: Vec<f64>, offset: f64, scale: f64) -> Result<Self> {
        if mass.len() < 2 {
            return Err(Error::InvalidDensity(format!("grid length {} < 2", mass.len())));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidDensity("negative or non-finite mass".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDensity(format!("total mass {total}")));
        }
        if !(offset.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "offset {offset} / scale {scale}"
            )));
        }
        Ok(Self { mass, offset, scale })
    }

    /// Normalizes arbitrary nonnegative weights to unit mass.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidDensity(format!("weights sum to {total}")));
        }
        Self::new(weights.iter().map(|w| w / total).collect(), 0.0, 1.0)
    }

    pub fn uniform(grid_len: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; grid_len])
    }

    /// All mass in the cell of the node nearest to `position`.
    pub fn dirac(grid_len: usize, position: f64) -> Result<Self> {
        if grid_len < 2 {
            return Err(Error::InvalidDensity("grid length < 2".into()));
        }
        let mut mass = vec![0.0; grid_len];
        mass[nearest_node(grid_len, position)] = 1.0;
        Self::new(mass, 0.0, 1.0)
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn grid_len(&self) -> usize {
        self.mass.len()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.mass.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(i, m)| m * self.node(i))
            .sum()
    }

    pub fn argmax(&self) -> usize {
        self.mass
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &m)| {
                if m > best.1 {
                    (i, m)
                } else {
                    best
                }
            })
            .0
    }

    /// Pieces of the (piecewise linear) quantile function, one per cell with
    /// positive mass, as `(q_start, q_end, x_start, x_end)`.
    pub(crate) fn quantile_pieces(&self) -> Vec<QuantilePiece> {
        let h = self.spacing();
        let total: f64 = self.mass.iter().sum();
        let mut pieces = Vec::with_capacity(self.mass.len());
        let mut cum = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let q0 = cum / total;
            cum += m;
            let x0 = (i as f64 - 0.5) * h;
            pieces.push(QuantilePiece {
                q0,
                q1: cum / total,
                x0,
                x1: x0 + h,
            });
        }
        if let Some(last) = pieces.last_mut() {
            last.q1 = 1.0;
        }
        pieces
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct QuantilePiece {
    pub q0: f64,
    pub q1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl QuantilePiece {
    pub fn eval(&self, q: f64) -> f64 {
        let w = self.q1 - self.q0;
        if w <= 0.0 {
            return self.x0;
        }
        let t = ((q - self.q0) / w).clamp(0.0, 1.0);
        self.x0 + t * (self.x1 - self.x0)
    }
}

/// Walks two quantile functions over the union of their breakpoints, calling
/// `f(q0, q1, a0, a1, b0, b1)` on every interval where both are linear.
pub(crate) fn merge_quantiles(
    a: &[QuantilePiece],
    b: &[QuantilePiece],
    mut f: impl FnMut(f64, f64, f64, f64, f64, f64),
) {
    let (mut i, mut j) = (0, 0);
    let mut q = 0.0;
    while i < a.len() && j < b.len() {
        let q_next = a[i].q1.min(b[j].q1);
        if q_next > q {
            f(
                q,
                q_next,
                a[i].eval(q),
                a[i].eval(q_next),
                b[j].eval(q),
                b[j].eval(q_next),
            );
            q = q_next;
        }
        if a[i].q1 <= q_next {
            i += 1;
        }
        if b[j].q1 <= q_next {
            j += 1;
        }
    }
}

pub(crate) fn nearest_node(grid_len: usize, position: f64) -> usize {
    let h = 1.0 / (grid_len - 1) as f64;
    ((position / h).round().max(0.0) as usize).min(grid_len - 1)
}

/// Total variation distance `½ Σ |a_i − b_i|` between two same-grid densities.
pub fn total_variation(a: &DensityOnGrid, b: &DensityOnGrid) -> f64 {
    0.5 * a
        .mass
        .iter()
        .zip(&b.mass)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(DensityOnGrid::new(vec![1.0], 0.0, 1.0).is_err());
        assert!(DensityOnGrid::new(vec![0.5, 0.6], 0.0, 1.0).is_err());
        assert!(DensityOnGrid::new(vec![-0.5, 1.5], 0.0, 1.0).is_err());
        assert!(DensityOnGrid::new(vec![0.5, 0.5], 0.0, 0.0).is_err());
        assert!(DensityOnGrid::new(vec![0.5, 0.5], 0.0, 1.0).is_ok());
    }

    #[test]
    fn dirac_cell_and_quantile() {
        let d = DensityOnGrid::dirac(11, 0.2).unwrap();
        assert_eq!(d.argmax(), 2);
        let p = d.quantile_pieces();
        assert_eq!(p.len(), 1);
        assert!((p[0].eval(0.5) - 0.2).abs() < 1e-12);
        assert!((d.mean() - 0.2).abs() < 1e-12);
    }
}
