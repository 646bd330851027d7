//! Log-domain Sinkhorn with epsilon scaling.
//!
//! Dual potentials `f`, `g` give the plan `T_ij = exp((f_i + g_j - C_ij) / eps)`.
//! Each sweep makes the column sums exact, so convergence is judged on the
//! rows. Epsilon starts at the cost range and halves down to the target,
//! carrying the potentials over between stages.

use super::transport::{CostMatrix, TransportConfig};
use crate::error::{Error, Result};
use crate::exec;

const STAGE_TOL: f64 = 1e-4;
const STAGE_CAP: usize = 2000;
/// Sweeps between marginal checks.
const CHECK_EVERY: usize = 10;

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct State<'a> {
    cost: &'a CostMatrix,
    cost_t: CostMatrix,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl State<'_> {
    fn sweep(&mut self, eps: f64, config: &TransportConfig) {
        let (cost, g, log_a) = (self.cost, &self.g, &self.log_a);
        self.f = exec::map_range(config.execution, cost.rows(), |i| {
            if log_a[i] == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let row = cost.row(i);
            let lse = log_sum_exp(g.iter().zip(row).map(|(g, c)| (g - c) / eps));
            eps * (log_a[i] - lse)
        });
        let (cost_t, f, log_b) = (&self.cost_t, &self.f, &self.log_b);
        self.g = exec::map_range(config.execution, cost_t.rows(), |j| {
            if log_b[j] == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let col = cost_t.row(j);
            let lse = log_sum_exp(f.iter().zip(col).map(|(f, c)| (f - c) / eps));
            eps * (log_b[j] - lse)
        });
    }

    fn row_violation(&self, eps: f64, a: &[f64], config: &TransportConfig) -> f64 {
        let rows = exec::map_range(config.execution, self.cost.rows(), |i| {
            if a[i] == 0.0 {
                return 0.0;
            }
            let s: f64 = self
                .g
                .iter()
                .zip(self.cost.row(i))
                .map(|(g, c)| ((self.f[i] + g - c) / eps).exp())
                .sum();
            (s - a[i]).abs()
        });
        rows.into_iter().fold(0.0, f64::max)
    }
}

pub(crate) fn solve(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    config: &TransportConfig,
) -> Result<Vec<f64>> {
    let (m, n) = (cost.rows(), cost.cols());
    let (lo, hi) = cost
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &c| {
            (l.min(c), h.max(c))
        });
    let target = config.epsilon;
    let mut eps = (hi - lo).max(target);

    let mut st = State {
        cost,
        cost_t: cost.transpose(),
        log_a: a.iter().map(|x| x.ln()).collect(),
        log_b: b.iter().map(|x| x.ln()).collect(),
        f: vec![0.0; m],
        g: vec![0.0; n],
    };

    let mut iters = 0usize;
    loop {
        let last = eps <= target;
        let tol = if last {
            config.tol
        } else {
            config.tol.max(STAGE_TOL)
        };
        let mut stage = 0usize;
        loop {
            if iters >= config.max_iter {
                return Err(Error::NonConvergence(format!(
                    "sinkhorn did not reach marginal tolerance {} in {} iterations (epsilon {target})",
                    config.tol, config.max_iter
                )));
            }
            st.sweep(eps, config);
            iters += 1;
            stage += 1;
            let check = stage.is_multiple_of(CHECK_EVERY) || iters == config.max_iter;
            if (check && st.row_violation(eps, a, config) < tol) || (!last && stage >= STAGE_CAP) {
                break;
            }
        }
        if last {
            break;
        }
        eps = (eps * 0.5).max(target);
    }

    let mut plan = vec![0.0; m * n];
    exec::for_each_mut(config.execution, &mut plan, |k, t| {
        let (i, j) = (k / n, k % n);
        *t = ((st.f[i] + st.g[j] - cost.get(i, j)) / eps).exp();
    });
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::transport::TransportMode;

    #[test]
    fn uniform_cost_gives_product_plan() {
        let c = CostMatrix::from_fn(3, 2, |_, _| 1.0).unwrap();
        let a = [0.2, 0.3, 0.5];
        let b = [0.6, 0.4];
        let cfg = TransportConfig::entropic(0.05);
        let p = solve(&c, &a, &b, &cfg).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!((p[i * 2 + j] - a[i] * b[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_weight_rows_and_columns_stay_empty() {
        let c = CostMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64).powi(2)).unwrap();
        let cfg = TransportConfig::entropic(0.1);
        let p = solve(&c, &[0.5, 0.0, 0.5], &[0.25, 0.75, 0.0], &cfg).unwrap();
        assert!(p[3..6].iter().all(|&x| x == 0.0));
        assert!(p[2] == 0.0 && p[8] == 0.0);
        let row0: f64 = p[0..3].iter().sum();
        assert!((row0 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn reports_nonconvergence() {
        let c = CostMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64).unwrap();
        let w = [0.25; 4];
        let cfg = TransportConfig {
            mode: TransportMode::Entropic,
            epsilon: 1e-3,
            max_iter: 2,
            tol: 1e-12,
            ..TransportConfig::default()
        };
        assert!(matches!(
            solve(&c, &w, &w, &cfg),
            Err(Error::NonConvergence(_))
        ));
    }
}
