//! Discrete optimal transport: an exact min-cost-flow solver for small
//! instances, a log-domain Sinkhorn solver, and a two-measure entropic
//! barycenter on a shared 1-D grid.

use ndarray::Array2;

use crate::density::{DensityOnGrid, MASS_TOL};
use crate::error::{Error, Result};

/// Largest `n * m` accepted by [`exact_ot`].
pub const EXACT_OT_MAX_CELLS: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<usize>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() || atoms.is_empty() {
            return Err(Error::Dimension(format!(
                "{} atoms vs {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParam("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidParam(format!("weights sum to {total}")));
        }
        let mut sorted = atoms.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParam("atoms must be distinct".into()));
        }
        Ok(Self { atoms, weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), vec![1.0 / n as f64; n])
    }

    /// Weights on atoms `0..n`, normalized to unit mass.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParam(format!("weights sum to {total}")));
        }
        Self::new(
            (0..weights.len()).collect(),
            weights.iter().map(|w| w / total).collect(),
        )
    }

    pub fn atoms(&self) -> &[usize] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricTag {
    SquaredGrid,
    BeatShape,
}

impl MetricTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricTag::SquaredGrid => "squared-grid",
            MetricTag::BeatShape => "beat-shape",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    matrix: Array2<f64>,
    pub metric: MetricTag,
}

impl CostMatrix {
    pub fn new(matrix: Array2<f64>, metric: MetricTag) -> Result<Self> {
        if matrix.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        if matrix.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidParam("cost entries must be >= 0".into()));
        }
        Ok(Self { matrix, metric })
    }

    /// `(x_i - x_j)^2` on a `grid_len`-point uniform grid over `[0, 1]`.
    pub fn squared_grid(grid_len: usize) -> Self {
        let h = 1.0 / (grid_len.max(2) - 1) as f64;
        let matrix = Array2::from_shape_fn((grid_len, grid_len), |(i, j)| {
            let d = (i as f64 - j as f64) * h;
            d * d
        });
        Self {
            matrix,
            metric: MetricTag::SquaredGrid,
        }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.dim()
    }

    pub fn max(&self) -> f64 {
        self.matrix.iter().copied().fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.t().to_owned(),
            metric: self.metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub matrix: Array2<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.matrix.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// Worst absolute deviation of any row or column sum from its marginal.
    pub fn marginal_violation(&self) -> f64 {
        let rows = self
            .row_sums()
            .iter()
            .zip(&self.row_marginal)
            .map(|(s, a)| (s - a).abs())
            .fold(0.0, f64::max);
        let cols = self
            .col_sums()
            .iter()
            .zip(&self.col_marginal)
            .map(|(s, b)| (s - b).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }

    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        (&self.matrix * cost.matrix()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct OtSolution {
    pub plan: TransportPlan,
    pub cost: f64,
}

fn check_dims(cost: &CostMatrix, a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<()> {
    let (n, m) = cost.shape();
    if n != a.len() || m != b.len() {
        return Err(Error::Dimension(format!(
            "cost is {n}x{m}, measures have {} and {} atoms",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Unregularized transport by successive shortest augmenting paths on the
/// bipartite residual graph. Exact up to floating point; meant as an oracle.
pub fn exact_ot(cost: &CostMatrix, a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<OtSolution> {
    check_dims(cost, a, b)?;
    let (n, m) = cost.shape();
    if n * m > EXACT_OT_MAX_CELLS {
        return Err(Error::TooLarge {
            n,
            m,
            limit: EXACT_OT_MAX_CELLS,
        });
    }
    const EPS: f64 = 1e-15;
    let c = cost.matrix();
    let mut supply = a.weights().to_vec();
    let mut demand = b.weights().to_vec();
    let mut flow = Array2::<f64>::zeros((n, m));

    #[derive(Clone, Copy)]
    enum Pred {
        None,
        Row(usize),
        Col(usize),
    }

    let max_rounds = 4 * (n + m) * (n + m) + 16;
    for _ in 0..max_rounds {
        let left_supply: f64 = supply.iter().sum();
        let left_demand: f64 = demand.iter().sum();
        if left_supply.min(left_demand) <= 1e-13 {
            break;
        }
        // Bellman-Ford from every row that still has supply.
        let mut dist_row: Vec<f64> = supply
            .iter()
            .map(|&s| if s > EPS { 0.0 } else { f64::INFINITY })
            .collect();
        let mut dist_col = vec![f64::INFINITY; m];
        let mut pred_row = vec![Pred::None; n];
        let mut pred_col = vec![Pred::None; m];
        for _ in 0..(n + m + 1) {
            let mut changed = false;
            for i in 0..n {
                if !dist_row[i].is_finite() {
                    continue;
                }
                for j in 0..m {
                    let d = dist_row[i] + c[[i, j]];
                    if d < dist_col[j] - 1e-15 {
                        dist_col[j] = d;
                        pred_col[j] = Pred::Row(i);
                        changed = true;
                    }
                }
            }
            for j in 0..m {
                if !dist_col[j].is_finite() {
                    continue;
                }
                for i in 0..n {
                    if flow[[i, j]] > EPS {
                        let d = dist_col[j] - c[[i, j]];
                        if d < dist_row[i] - 1e-15 {
                            dist_row[i] = d;
                            pred_row[i] = Pred::Col(j);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let Some(sink) = (0..m)
            .filter(|&j| demand[j] > EPS && dist_col[j].is_finite())
            .min_by(|&x, &y| dist_col[x].total_cmp(&dist_col[y]))
        else {
            break;
        };

        // Trace the path back to its source row and find the bottleneck.
        let mut bottleneck = demand[sink];
        let mut edges = Vec::new();
        let mut j = sink;
        let source = loop {
            let Pred::Row(i) = pred_col[j] else {
                unreachable!("column reached without a row predecessor")
            };
            edges.push((i, j, true));
            match pred_row[i] {
                Pred::Col(j_prev) => {
                    bottleneck = bottleneck.min(flow[[i, j_prev]]);
                    edges.push((i, j_prev, false));
                    j = j_prev;
                }
                _ => break i,
            }
        };
        bottleneck = bottleneck.min(supply[source]);
        for (i, j, forward) in edges {
            if forward {
                flow[[i, j]] += bottleneck;
            } else {
                flow[[i, j]] = (flow[[i, j]] - bottleneck).max(0.0);
            }
        }
        supply[source] -= bottleneck;
        demand[sink] -= bottleneck;
    }

    let plan = TransportPlan {
        matrix: flow,
        row_marginal: a.weights().to_vec(),
        col_marginal: b.weights().to_vec(),
    };
    let total = plan.cost(cost);
    Ok(OtSolution { plan, cost: total })
}

/// Entropic regularization strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    /// In cost units.
    Absolute(f64),
    /// Multiplied by the largest entry of each cost matrix.
    RelativeToMaxCost(f64),
}

impl Lambda {
    pub fn resolve(self, max_cost: f64) -> f64 {
        match self {
            Lambda::Absolute(l) => l,
            Lambda::RelativeToMaxCost(r) if max_cost > 0.0 => r * max_cost,
            Lambda::RelativeToMaxCost(r) => r,
        }
    }

    fn value(self) -> f64 {
        match self {
            Lambda::Absolute(l) | Lambda::RelativeToMaxCost(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub lambda: Lambda,
    /// Stopping threshold on the largest marginal deviation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            lambda: Lambda::RelativeToMaxCost(1e-2),
            tol: 1e-6,
            max_iter: 100_000,
        }
    }
}

impl SinkhornParams {
    pub fn validate(&self) -> Result<()> {
        let l = self.lambda.value();
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParam(format!("lambda {l} must be > 0")));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParam(format!("tol {} must be > 0", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParam("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub plan: TransportPlan,
    pub cost: f64,
    pub iterations: usize,
    /// Marginal violation before rounding, logged every
    /// [`CHECKPOINT_EVERY`] iterations at the target regularization.
    pub checkpoints: Vec<f64>,
}

pub const CHECKPOINT_EVERY: usize = 10;

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn ln_weights(w: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
        .collect()
}

struct LogSinkhorn<'a> {
    c: &'a Array2<f64>,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl LogSinkhorn<'_> {
    fn update_f(&mut self, lambda: f64) {
        let (n, m) = self.c.dim();
        for i in 0..n {
            if self.log_a[i] == f64::NEG_INFINITY {
                self.f[i] = f64::NEG_INFINITY;
                continue;
            }
            let lse = log_sum_exp((0..m).map(|j| (self.g[j] - self.c[[i, j]]) / lambda));
            self.f[i] = lambda * (self.log_a[i] - lse);
        }
    }

    fn update_g(&mut self, lambda: f64) {
        let (n, m) = self.c.dim();
        for j in 0..m {
            if self.log_b[j] == f64::NEG_INFINITY {
                self.g[j] = f64::NEG_INFINITY;
                continue;
            }
            let lse = log_sum_exp((0..n).map(|i| (self.f[i] - self.c[[i, j]]) / lambda));
            self.g[j] = lambda * (self.log_b[j] - lse);
        }
    }

    fn plan(&self, lambda: f64) -> Array2<f64> {
        Array2::from_shape_fn(self.c.dim(), |(i, j)| {
            let e = self.f[i] + self.g[j] - self.c[[i, j]];
            if e == f64::NEG_INFINITY {
                0.0
            } else {
                (e / lambda).exp()
            }
        })
    }

    /// L1 row-marginal violation (columns are exact right after `update_g`).
    fn violation(&self, lambda: f64, a: &[f64]) -> f64 {
        let (n, m) = self.c.dim();
        (0..n)
            .map(|i| {
                if self.f[i] == f64::NEG_INFINITY {
                    return a[i];
                }
                let s: f64 = (0..m)
                    .map(|j| {
                        let e = self.f[i] + self.g[j] - self.c[[i, j]];
                        if e == f64::NEG_INFINITY {
                            0.0
                        } else {
                            (e / lambda).exp()
                        }
                    })
                    .sum();
                (s - a[i]).abs()
            })
            .sum()
    }
}

/// Projects a nearly feasible plan onto the exact marginals by scaling down
/// overfull rows and columns and redistributing the deficit as a rank-one
/// correction.
fn round_to_marginals(mut p: Array2<f64>, a: &[f64], b: &[f64]) -> Array2<f64> {
    let (n, m) = p.dim();
    for i in 0..n {
        let s: f64 = p.row(i).sum();
        if s > a[i] && s > 0.0 {
            let k = a[i] / s;
            p.row_mut(i).mapv_inplace(|x| x * k);
        }
    }
    for j in 0..m {
        let s: f64 = p.column(j).sum();
        if s > b[j] && s > 0.0 {
            let k = b[j] / s;
            p.column_mut(j).mapv_inplace(|x| x * k);
        }
    }
    let err_r: Vec<f64> = (0..n).map(|i| (a[i] - p.row(i).sum()).max(0.0)).collect();
    let err_c: Vec<f64> = (0..m).map(|j| (b[j] - p.column(j).sum()).max(0.0)).collect();
    let total: f64 = err_r.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            for j in 0..m {
                p[[i, j]] += err_r[i] * err_c[j] / total;
            }
        }
    }
    p
}

/// Entropy-regularized transport in the log domain.
///
/// The regularization is annealed geometrically from the largest cost down
/// to the requested value, warm-starting the dual potentials at every stage.
/// Only the final stage is held to `params.tol`; the returned plan is then
/// rounded onto the exact marginals.
pub fn sinkhorn(
    cost: &CostMatrix,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    params: &SinkhornParams,
) -> Result<SinkhornSolution> {
    check_dims(cost, a, b)?;
    params.validate()?;
    let (n, m) = cost.shape();
    let max_cost = cost.max();
    let lambda = params.lambda.resolve(max_cost);

    let mut state = LogSinkhorn {
        c: cost.matrix(),
        log_a: ln_weights(a.weights()),
        log_b: ln_weights(b.weights()),
        f: vec![0.0; n],
        g: vec![0.0; m],
    };

    let mut stages = Vec::new();
    let mut l = max_cost.max(lambda);
    while l > lambda * 1.5 {
        stages.push(l);
        l *= 0.5;
    }

    let mut iterations = 0;
    for &stage_lambda in &stages {
        for k in 0..100 {
            state.update_f(stage_lambda);
            state.update_g(stage_lambda);
            iterations += 1;
            if k % 10 == 9 && state.violation(stage_lambda, a.weights()) < 1e-3 {
                break;
            }
        }
    }

    let mut checkpoints = Vec::new();
    let mut violation = f64::INFINITY;
    let mut converged = false;
    // `max_iter` caps the target-regularization stage; annealing adds at
    // most 100 iterations per stage on top.
    for k in 1..=params.max_iter {
        state.update_f(lambda);
        state.update_g(lambda);
        iterations += 1;
        if k % CHECKPOINT_EVERY == 0 || k == 1 {
            violation = state.violation(lambda, a.weights());
            if k % CHECKPOINT_EVERY == 0 {
                checkpoints.push(violation);
            }
            if violation <= params.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            violation,
        });
    }

    let matrix = round_to_marginals(state.plan(lambda), a.weights(), b.weights());
    let plan = TransportPlan {
        matrix,
        row_marginal: a.weights().to_vec(),
        col_marginal: b.weights().to_vec(),
    };
    let total = plan.cost(cost);
    Ok(SinkhornSolution {
        plan,
        cost: total,
        iterations,
        checkpoints,
    })
}

/// Debiased entropic barycenter of `mu` (weight `1 - alpha`) and `nu`
/// (weight `alpha`) on their shared grid, squared grid distance as ground cost.
pub fn entropic_barycenter(
    mu: &DensityOnGrid,
    nu: &DensityOnGrid,
    alpha: f64,
    params: &SinkhornParams,
) -> Result<DensityOnGrid> {
    entropic_barycenter_with(mu, nu, alpha, params, true)
}

pub fn entropic_barycenter_with(
    mu: &DensityOnGrid,
    nu: &DensityOnGrid,
    alpha: f64,
    params: &SinkhornParams,
    debiased: bool,
) -> Result<DensityOnGrid> {
    if mu.grid_len() != nu.grid_len() {
        return Err(Error::Dimension(format!(
            "grid lengths {} and {}",
            mu.grid_len(),
            nu.grid_len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam(format!("alpha {alpha} outside [0, 1]")));
    }
    params.validate()?;
    let g = mu.grid_len();
    let cost = CostMatrix::squared_grid(g);
    let lambda = params.lambda.resolve(cost.max());
    let c = cost.matrix();

    // log (K v) for the Gibbs kernel K = exp(-C / lambda).
    let log_k = |v: &[f64]| -> Vec<f64> {
        (0..g)
            .map(|i| log_sum_exp((0..g).map(|j| v[j] - c[[i, j]] / lambda)))
            .collect()
    };

    let weights = [1.0 - alpha, alpha];
    let log_mu = [ln_weights(mu.mass()), ln_weights(nu.mass())];
    let mut log_b = [vec![0.0; g], vec![0.0; g]];
    let mut log_d = vec![0.0; g];
    let mut p_prev = vec![0.0; g];
    let mut p = vec![0.0; g];

    let mut iter = 0;
    loop {
        iter += 1;
        let mut log_ka: [Vec<f64>; 2] = Default::default();
        for k in 0..2 {
            let kb = log_k(&log_b[k]);
            let log_a: Vec<f64> = log_mu[k]
                .iter()
                .zip(&kb)
                .map(|(&lm, &lk)| if lm == f64::NEG_INFINITY { lm } else { lm - lk })
                .collect();
            log_ka[k] = log_k(&log_a);
        }
        let log_p: Vec<f64> = (0..g)
            .map(|i| {
                let mut s = if debiased { log_d[i] } else { 0.0 };
                for k in 0..2 {
                    if weights[k] > 0.0 {
                        s += weights[k] * log_ka[k][i];
                    }
                }
                s
            })
            .collect();
        for k in 0..2 {
            for i in 0..g {
                log_b[k][i] = log_p[i] - log_ka[k][i];
            }
        }
        if debiased {
            let kd = log_k(&log_d);
            for i in 0..g {
                log_d[i] = 0.5 * (log_d[i] + log_p[i] - kd[i]);
            }
        }

        let max = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = log_p.iter().map(|v| (v - max).exp()).sum();
        for i in 0..g {
            p[i] = (log_p[i] - max).exp() / z;
        }
        let change: f64 = p.iter().zip(&p_prev).map(|(x, y)| (x - y).abs()).sum();
        if iter > 1 && change <= params.tol * 1e-2 {
            break;
        }
        if iter >= params.max_iter {
            return Err(Error::NonConvergence {
                iterations: iter,
                violation: change,
            });
        }
        std::mem::swap(&mut p, &mut p_prev);
    }

    DensityOnGrid::new(
        p,
        (1.0 - alpha) * mu.offset + alpha * nu.offset,
        (1.0 - alpha) * mu.scale + alpha * nu.scale,
    )
}
