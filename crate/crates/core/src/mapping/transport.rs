use serde::{Deserialize, Serialize};

use super::{simplex, sinkhorn, LinearMap};
use crate::embedding::{squared_distance, EmbeddingSpace, Vector};
use crate::error::{check_dim, Error, Result};
use crate::exec::{self, Execution};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Weighted point cloud `sum_i w_i delta(x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Vector>, weights: Vec<f64>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::Insufficient("distribution has no points".into()));
        };
        let dim = first.dim();
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        validate_weights(&weights)?;
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in &points {
            check_dim(dim, p.dim())?;
            flat.extend_from_slice(p);
        }
        Ok(DiscreteDistribution {
            dim,
            points: flat,
            weights,
        })
    }

    pub fn uniform(points: Vec<Vector>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    /// Uniform weights over the first `limit` rows of a space (all rows when
    /// `None`). Embedding files are conventionally frequency sorted.
    pub fn from_space(space: &EmbeddingSpace, limit: Option<usize>) -> Result<Self> {
        let n = limit.map_or(space.len(), |l| l.min(space.len()));
        let points = (0..n)
            .map(|i| Vector::from_finite(space.row(i).to_vec()))
            .collect();
        Self::uniform(points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn validate_weights(w: &[f64]) -> Result<()> {
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidInput(format!(
            "weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Dense row-major `rows x cols` cost matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "cost matrix {rows}x{cols} with {} entries",
                data.len()
            )));
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "cost matrix has non-finite entries".into(),
            ));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn transpose(&self) -> CostMatrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Squared Euclidean ground cost `c(x_i W, z_j)`.
pub fn cost_matrix(
    g: &LinearMap,
    src: &DiscreteDistribution,
    tgt: &DiscreteDistribution,
    exec: Execution,
) -> Result<CostMatrix> {
    check_dim(g.rows(), src.dim())?;
    check_dim(g.cols(), tgt.dim())?;
    let (m, n) = (src.len(), tgt.len());
    let rows = exec::map_range(exec, m, |i| {
        let gx = g.apply_unchecked(src.point(i));
        (0..n)
            .map(|j| squared_distance(&gx, tgt.point(j)))
            .collect::<Vec<_>>()
    });
    CostMatrix::new(m, n, rows.concat())
}

/// Coupling between two discrete distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    plan: Vec<f64>,
    pub source_marginal: Vec<f64>,
    pub target_marginal: Vec<f64>,
}

impl TransportPlan {
    pub(crate) fn new(rows: usize, cols: usize, plan: Vec<f64>, a: &[f64], b: &[f64]) -> Self {
        TransportPlan {
            rows,
            cols,
            plan,
            source_marginal: a.to_vec(),
            target_marginal: b.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.plan[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for i in 0..self.rows {
            s.iter_mut().zip(self.row(i)).for_each(|(a, x)| *a += x);
        }
        s
    }

    /// Largest absolute deviation of the row and column sums from the
    /// prescribed marginals, as `(rows, cols)`.
    pub fn marginal_violation(&self) -> (f64, f64) {
        let dev = |sums: Vec<f64>, want: &[f64]| {
            sums.iter()
                .zip(want)
                .map(|(s, w)| (s - w).abs())
                .fold(0.0, f64::max)
        };
        (
            dev(self.row_sums(), &self.source_marginal),
            dev(self.col_sums(), &self.target_marginal),
        )
    }

    /// `sum_ij T_ij C_ij`.
    pub fn cost(&self, cost: &CostMatrix) -> Result<f64> {
        check_dim(self.rows, cost.rows())?;
        check_dim(self.cols, cost.cols())?;
        Ok(self.plan.iter().zip(cost.data()).map(|(t, c)| t * c).sum())
    }
}

/// Total cost `sum_ij T_ij |x_i W - z_j|^2` of a plan under map `g`.
pub fn transport_cost(
    g: &LinearMap,
    src: &DiscreteDistribution,
    tgt: &DiscreteDistribution,
    plan: &TransportPlan,
) -> Result<f64> {
    check_dim(src.len(), plan.rows())?;
    check_dim(tgt.len(), plan.cols())?;
    check_dim(g.rows(), src.dim())?;
    check_dim(g.cols(), tgt.dim())?;
    let mut total = 0.0;
    for i in 0..src.len() {
        let gx = g.apply_unchecked(src.point(i));
        for (j, t) in plan.row(i).iter().enumerate() {
            if *t != 0.0 {
                total += t * squared_distance(&gx, tgt.point(j));
            }
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    /// Network simplex; an optimal vertex of the transport polytope.
    Exact,
    /// Log-domain Sinkhorn on `exp(-C / epsilon)`.
    Entropic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    pub mode: TransportMode,
    /// Entropic regularization strength.
    pub epsilon: f64,
    /// Sinkhorn iteration cap (entropic) or pivot cap multiplier (exact).
    pub max_iter: usize,
    /// Entropic stopping rule: maximum row-marginal violation.
    pub tol: f64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mode: TransportMode::Exact,
            epsilon: 1e-2,
            max_iter: 100_000,
            tol: 1e-9,
            execution: Execution::default(),
        }
    }
}

impl TransportConfig {
    pub fn entropic(epsilon: f64) -> Self {
        TransportConfig {
            mode: TransportMode::Entropic,
            epsilon,
            ..Self::default()
        }
    }
}

/// Minimizes `sum_ij T_ij C_ij` over couplings with row sums `a` and column
/// sums `b`.
pub fn solve_transport(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    config: &TransportConfig,
) -> Result<TransportPlan> {
    check_dim(cost.rows(), a.len())?;
    check_dim(cost.cols(), b.len())?;
    validate_weights(a)?;
    validate_weights(b)?;
    let plan = match config.mode {
        TransportMode::Exact => simplex::solve(cost, a, b, config.max_iter.max(1))?.flows,
        TransportMode::Entropic => {
            if !(config.epsilon > 0.0 && config.tol > 0.0) {
                return Err(Error::InvalidInput(
                    "epsilon and tol must be positive".into(),
                ));
            }
            sinkhorn::solve(cost, a, b, config)?
        }
    };
    Ok(TransportPlan::new(cost.rows(), cost.cols(), plan, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one() {
        let c = CostMatrix::new(1, 1, vec![3.0]).unwrap();
        for cfg in [TransportConfig::default(), TransportConfig::entropic(0.1)] {
            let p = solve_transport(&c, &[1.0], &[1.0], &cfg).unwrap();
            assert!((p.get(0, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_cost_is_forced() {
        let n = 6;
        let perm = [3, 0, 5, 1, 4, 2];
        let c = CostMatrix::from_fn(n, n, |i, j| if perm[i] == j { 0.0 } else { 1.0 }).unwrap();
        let w = vec![1.0 / n as f64; n];
        let p = solve_transport(&c, &w, &w, &TransportConfig::default()).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = if perm[i] == j { 1.0 / n as f64 } else { 0.0 };
                assert!((p.get(i, j) - want).abs() < 1e-12);
            }
        }
        assert!(p.cost(&c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_weights() {
        let c = CostMatrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        let cfg = TransportConfig::default();
        assert!(solve_transport(&c, &[1.0], &[0.7, 0.7], &cfg).is_err());
        assert!(solve_transport(&c, &[1.0], &[-0.5, 1.5], &cfg).is_err());
        assert!(solve_transport(&c, &[1.0], &[1.0], &cfg).is_err());
    }

    #[test]
    fn identity_diagonal_plan_costs_nothing() {
        let pts: Vec<Vector> = (0..4)
            .map(|i| Vector::new(vec![i as f64, 1.0 - i as f64]).unwrap())
            .collect();
        let d = DiscreteDistribution::uniform(pts).unwrap();
        let plan = TransportPlan::new(
            4,
            4,
            (0..16)
                .map(|k| if k % 5 == 0 { 0.25 } else { 0.0 })
                .collect(),
            d.weights(),
            d.weights(),
        );
        assert_eq!(
            transport_cost(&LinearMap::identity(2), &d, &d, &plan).unwrap(),
            0.0
        );
    }
}
