use nalgebra::DMatrix;

use super::linear::{procrustes, solve_spd};
use super::transport::{
    cost_matrix, solve_transport, DiscreteDistribution, TransportConfig, TransportPlan,
};
use super::LinearMap;
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum EmdInit {
    Identity,
    /// Orthogonal Procrustes over `(source index, target index)` pairs.
    ProcrustesFromSeeds(Vec<(usize, usize)>),
    Given(LinearMap),
}

#[derive(Clone, Debug)]
pub struct EmdConfig {
    pub outer_iter: usize,
    pub transport: TransportConfig,
    /// Pulls `W` towards the identity: `ridge |W - I|_F^2`.
    pub ridge: f64,
    pub init: EmdInit,
    /// Stop once the objective drops by less than this between iterations.
    pub tol: Option<f64>,
}

impl Default for EmdConfig {
    fn default() -> Self {
        EmdConfig {
            outer_iter: 10,
            transport: TransportConfig::default(),
            ridge: 1e-3,
            init: EmdInit::Identity,
            tol: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmdFit {
    pub map: LinearMap,
    /// Objective `sum T_ij |x_i W - z_j|^2 + ridge |W - I|^2` after each
    /// transport step.
    pub trace: Vec<f64>,
    /// Plan paired with `map` in the last trace entry.
    pub plan: TransportPlan,
}

/// Alternates optimal transport under the current map with the weighted
/// least-squares map update for the current plan.
pub fn alternating_emd_fit(
    src: &DiscreteDistribution,
    tgt: &DiscreteDistribution,
    config: &EmdConfig,
) -> Result<EmdFit> {
    check_dim(src.dim(), tgt.dim())?;
    if config.outer_iter == 0 {
        return Err(Error::InvalidInput("outer_iter must be at least 1".into()));
    }
    if !(config.ridge >= 0.0 && config.ridge.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "ridge {} must be nonnegative",
            config.ridge
        )));
    }
    let d = src.dim();
    let mut map = match &config.init {
        EmdInit::Identity => LinearMap::identity(d),
        EmdInit::ProcrustesFromSeeds(pairs) => {
            if let Some(&(i, j)) = pairs
                .iter()
                .find(|&&(i, j)| i >= src.len() || j >= tgt.len())
            {
                return Err(Error::InvalidInput(format!(
                    "seed index pair ({i}, {j}) out of range"
                )));
            }
            let rows: Vec<(&[f64], &[f64])> = pairs
                .iter()
                .map(|&(i, j)| (src.point(i), tgt.point(j)))
                .collect();
            procrustes(&rows)?
        }
        EmdInit::Given(w) => {
            check_dim(d, w.rows())?;
            check_dim(d, w.cols())?;
            w.clone()
        }
    };

    let mut trace = Vec::with_capacity(config.outer_iter);
    let mut plan = None;
    for k in 0..config.outer_iter {
        if let Some(p) = &plan {
            map = weighted_least_squares(src, tgt, p, config.ridge)?;
        }
        let cost = cost_matrix(&map, src, tgt, config.transport.execution)?;
        let p = solve_transport(&cost, src.weights(), tgt.weights(), &config.transport)?;
        let j = p.cost(&cost)? + config.ridge * distance_to_identity(&map);
        let prev = trace.last().copied();
        trace.push(j);
        plan = Some(p);
        if let (Some(tol), Some(prev)) = (config.tol, prev) {
            if k > 0 && prev - j < tol {
                break;
            }
        }
    }
    Ok(EmdFit {
        map,
        trace,
        plan: plan.expect("at least one iteration"),
    })
}

fn distance_to_identity(w: &LinearMap) -> f64 {
    let m = w.matrix();
    let mut s = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let e = m[(i, j)] - if i == j { 1.0 } else { 0.0 };
            s += e * e;
        }
    }
    s
}

/// `(X^T D X + ridge I)` and `X^T T Z + ridge I`, `D = diag(row sums)`.
fn normal_equations(
    src: &DiscreteDistribution,
    tgt: &DiscreteDistribution,
    plan: &TransportPlan,
    ridge: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = src.dim();
    let mut lhs = DMatrix::identity(d, d) * ridge;
    let mut rhs = DMatrix::identity(d, d) * ridge;
    let mut tz = vec![0.0; d];
    for i in 0..src.len() {
        let x = src.point(i);
        let row = plan.row(i);
        let w: f64 = row.iter().sum();
        if w == 0.0 {
            continue;
        }
        tz.iter_mut().for_each(|v| *v = 0.0);
        for (j, t) in row.iter().enumerate() {
            if *t != 0.0 {
                tz.iter_mut()
                    .zip(tgt.point(j))
                    .for_each(|(a, z)| *a += t * z);
            }
        }
        for r in 0..d {
            for c in 0..d {
                lhs[(r, c)] += w * x[r] * x[c];
                rhs[(r, c)] += x[r] * tz[c];
            }
        }
    }
    (lhs, rhs)
}

pub(crate) fn weighted_least_squares(
    src: &DiscreteDistribution,
    tgt: &DiscreteDistribution,
    plan: &TransportPlan,
    ridge: f64,
) -> Result<LinearMap> {
    let (lhs, rhs) = normal_equations(src, tgt, plan, ridge);
    let w = solve_spd(lhs, &rhs).ok_or_else(|| {
        Error::Singular(format!(
            "weighted normal equations singular at ridge {ridge}; raise the ridge"
        ))
    })?;
    LinearMap::new(w)
}

/// Largest entry of `(X^T D X + ridge I) W - X^T T Z - ridge I`.
#[allow(dead_code)]
pub(crate) fn normal_equation_residual(
    src: &DiscreteDistribution,
    tgt: &DiscreteDistribution,
    plan: &TransportPlan,
    ridge: f64,
    w: &LinearMap,
) -> f64 {
    let (lhs, rhs) = normal_equations(src, tgt, plan, ridge);
    (lhs * w.matrix() - rhs).amax()
}
