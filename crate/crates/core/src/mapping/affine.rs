use nalgebra::{DMatrix, DVector, SVD};

use super::SeedPairs;
use crate::embedding::{distance, squared_distance, EmbeddingSpace, Vector};
use crate::error::{check_dim, Error, Result};
use crate::hypersphere::Hypersphere;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineMethod {
    /// Least squares on the pivot-differenced squared equations.
    Linearized,
    /// Gauss-Newton on the unsquared residuals.
    GaussNewton,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffineRefinement {
    pub mapped_center: Vector,
    /// `K = r2 / r1`.
    pub ratio: f64,
    pub mapped_radius: f64,
    /// RMS of `E(O2, Z_i) - K E(O1, X_i)` over the seeds used.
    pub residual: f64,
    pub seeds_used: usize,
    pub method: RefineMethod,
}

const RANK_TOL: f64 = 1e-10;
const GN_MAX_ITER: usize = 100;

/// Solves `E(O2, Z_i) = K E(O1, X_i)` over all seed pairs for the target
/// center `O2` and ratio `K`, then sets `r2 = K r1`.
///
/// Squaring each equation and subtracting the one for a pivot seed `j`
/// leaves a system linear in `(O2, K^2)`:
///
/// ```text
/// 2 (Z_j - Z_i) . O2 + K^2 (d_j^2 - d_i^2) = |Z_j|^2 - |Z_i|^2,   d_i = E(O1, X_i)
/// ```
///
/// The pivot is the seed with the median `d_i`. When that system is rank
/// deficient or yields `K^2 <= 0`, Gauss-Newton on the original residuals
/// takes over from `init_center`.
pub fn refine_affine(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    seeds: &SeedPairs,
    source_sphere: &Hypersphere,
    init_center: &[f64],
) -> Result<AffineRefinement> {
    check_dim(source.dim(), source_sphere.dim())?;
    check_dim(target.dim(), init_center.len())?;
    let o1 = source_sphere.center();
    let dt = target.dim();
    let scale = seeds
        .resolve(source, target)
        .iter()
        .map(|(x, _)| distance(x, o1))
        .fold(0.0f64, f64::max);
    let usable: Vec<(f64, &[f64])> = seeds
        .resolve(source, target)
        .into_iter()
        .map(|(x, z)| (distance(x, o1), z))
        .filter(|(d, _)| *d > scale * 1e-12)
        .collect();
    if usable.len() < dt + 2 {
        return Err(Error::Insufficient(format!(
            "{} usable seed pairs (off the source center, present in both spaces); need at least {}",
            usable.len(),
            dt + 2
        )));
    }

    let (center, ratio, method) = match linearized(&usable, dt) {
        Some((c, k2)) if k2 > 0.0 => (c, k2.sqrt(), RefineMethod::Linearized),
        _ => {
            let k0 = median(
                usable
                    .iter()
                    .map(|(d, z)| distance(init_center, z) / d)
                    .collect(),
            );
            let (c, k) = gauss_newton(&usable, init_center.to_vec(), k0)?;
            (c, k, RefineMethod::GaussNewton)
        }
    };
    if !(ratio > 0.0 && ratio.is_finite()) || center.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonConvergence(format!(
            "refinement produced ratio {ratio}"
        )));
    }
    let residual = rms(&usable, &center, ratio);
    Ok(AffineRefinement {
        mapped_center: Vector::from_finite(center),
        ratio,
        mapped_radius: ratio * source_sphere.radius(),
        residual,
        seeds_used: usable.len(),
        method,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

fn rms(seeds: &[(f64, &[f64])], center: &[f64], ratio: f64) -> f64 {
    let s: f64 = seeds
        .iter()
        .map(|(d, z)| (distance(center, z) - ratio * d).powi(2))
        .sum();
    (s / seeds.len() as f64).sqrt()
}

/// Column-scaled SVD least squares; `None` when rank deficient.
fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if norms.contains(&0.0) {
        return None;
    }
    let mut scaled = a;
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / n);
    }
    let svd = SVD::new(scaled, true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * RANK_TOL {
        return None;
    }
    let y = svd.solve(&b, 0.0).ok()?;
    Some(DVector::from_iterator(
        y.len(),
        y.iter().zip(&norms).map(|(v, n)| v / n),
    ))
}

/// Returns `(O2, K^2)`.
fn linearized(seeds: &[(f64, &[f64])], dt: usize) -> Option<(Vec<f64>, f64)> {
    let mut order: Vec<usize> = (0..seeds.len()).collect();
    order.sort_by(|&a, &b| seeds[a].0.total_cmp(&seeds[b].0).then(a.cmp(&b)));
    let pivot = order[(order.len() - 1) / 2];
    let (dj, zj) = seeds[pivot];
    let zj2: f64 = zj.iter().map(|x| x * x).sum();
    let others: Vec<usize> = (0..seeds.len()).filter(|&i| i != pivot).collect();
    let mut a = DMatrix::zeros(others.len(), dt + 1);
    let mut b = DVector::zeros(others.len());
    for (row, &i) in others.iter().enumerate() {
        let (di, zi) = seeds[i];
        for k in 0..dt {
            a[(row, k)] = 2.0 * (zj[k] - zi[k]);
        }
        a[(row, dt)] = dj * dj - di * di;
        b[row] = zj2 - zi.iter().map(|x| x * x).sum::<f64>();
    }
    let sol = least_squares(a, b)?;
    Some((sol.rows(0, dt).iter().copied().collect(), sol[dt]))
}

/// Gauss-Newton with step halving on `r_i = |O2 - Z_i| - K d_i`.
pub(crate) fn gauss_newton(
    seeds: &[(f64, &[f64])],
    mut center: Vec<f64>,
    mut k: f64,
) -> Result<(Vec<f64>, f64)> {
    let dt = center.len();
    let cost = |c: &[f64], k: f64| -> f64 {
        seeds
            .iter()
            .map(|(d, z)| (distance(c, z) - k * d).powi(2))
            .sum()
    };
    let mut current = cost(&center, k);
    for _ in 0..GN_MAX_ITER {
        let mut jac = DMatrix::zeros(seeds.len(), dt + 1);
        let mut res = DVector::zeros(seeds.len());
        for (i, (d, z)) in seeds.iter().enumerate() {
            let e = squared_distance(&center, z).sqrt();
            res[i] = -(e - k * d);
            if e > 0.0 {
                for j in 0..dt {
                    jac[(i, j)] = (center[j] - z[j]) / e;
                }
            }
            jac[(i, dt)] = -d;
        }
        let Some(step) = least_squares(jac, res) else {
            return Err(Error::Singular(
                "rank-deficient Gauss-Newton Jacobian".into(),
            ));
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = center
                .iter()
                .zip(step.iter())
                .map(|(c, s)| c + t * s)
                .collect();
            let tk = k + t * step[dt];
            let c = cost(&trial, tk);
            if c <= current {
                let moved = t * step.norm();
                let size = 1.0 + center.iter().map(|x| x * x).sum::<f64>().sqrt() + k.abs();
                let gain = current - c;
                center = trial;
                k = tk;
                current = c;
                accepted = true;
                if moved <= 1e-12 * size || gain <= 1e-15 * (1.0 + current) {
                    return Ok((center, k));
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent along the Gauss-Newton direction: stationary
            return Ok((center, k));
        }
    }
    Err(Error::NonConvergence(format!(
        "affine refinement did not converge in {GN_MAX_ITER} Gauss-Newton iterations"
    )))
}
