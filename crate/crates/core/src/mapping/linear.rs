use nalgebra::{DMatrix, SVD};

use super::{LinearMap, SeedPairs};
use crate::embedding::{EmbeddingSpace, Vector};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LinearFit {
    pub map: LinearMap,
    /// Seed pairs with both tokens present.
    pub resolved_pairs: usize,
    /// RMS of `||x W - z||` over the resolved pairs.
    pub residual: f64,
}

/// Ridge least squares for `X W = Z` over the resolvable seed pairs:
/// `(X^T X + ridge I) W = X^T Z`.
pub fn learn_linear_map(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    seeds: &SeedPairs,
    ridge: f64,
) -> Result<LinearFit> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "ridge {ridge} must be nonnegative"
        )));
    }
    let pairs = seeds.resolve(source, target);
    if pairs.is_empty() {
        return Err(Error::Insufficient(
            "no seed pair resolves in both spaces".into(),
        ));
    }
    let (ds, dt) = (source.dim(), target.dim());
    let x = DMatrix::from_fn(pairs.len(), ds, |i, j| pairs[i].0[j]);
    let z = DMatrix::from_fn(pairs.len(), dt, |i, j| pairs[i].1[j]);
    let mut gram = x.transpose() * &x;
    for i in 0..ds {
        gram[(i, i)] += ridge;
    }
    let rhs = x.transpose() * &z;
    let w = solve_spd(gram, &rhs).ok_or_else(|| {
        Error::Singular(format!(
            "normal equations singular with {} pairs in {ds} dimensions at ridge {ridge}; raise the ridge",
            pairs.len()
        ))
    })?;
    let map = LinearMap::new(w)?;
    let residual = rms_residual(&map, &pairs);
    Ok(LinearFit {
        map,
        resolved_pairs: pairs.len(),
        residual,
    })
}

/// Cholesky solve of a symmetric positive definite system; `None` when the
/// matrix is singular or numerically so.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot <= scale * 1e-13 {
        return None;
    }
    Some(chol.solve(b))
}

pub(crate) fn rms_residual(map: &LinearMap, pairs: &[(&[f64], &[f64])]) -> f64 {
    let sum: f64 = pairs
        .iter()
        .map(|(x, z)| {
            map.apply_unchecked(x)
                .iter()
                .zip(*z)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    (sum / pairs.len() as f64).sqrt()
}

/// Projects a source center into the target space, `O2 = O1 W`.
pub fn map_center(w: &LinearMap, o1: &[f64]) -> Result<Vector> {
    w.apply(o1)
}

/// Orthogonal Procrustes: the orthogonal `W` minimizing `||X W - Z||_F`,
/// `W = U V^T` from the SVD of `X^T Z`.
pub fn procrustes(pairs: &[(&[f64], &[f64])]) -> Result<LinearMap> {
    let Some(first) = pairs.first() else {
        return Err(Error::Insufficient(
            "procrustes needs at least one pair".into(),
        ));
    };
    let d = first.0.len();
    if pairs.iter().any(|(x, z)| x.len() != d || z.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: first.1.len(),
        });
    }
    let x = DMatrix::from_fn(pairs.len(), d, |i, j| pairs[i].0[j]);
    let z = DMatrix::from_fn(pairs.len(), d, |i, j| pairs[i].1[j]);
    let svd = SVD::new(x.transpose() * z, true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    LinearMap::new(u * vt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(tag: &str, rows: Vec<(String, Vec<f64>)>) -> EmbeddingSpace {
        let d = rows[0].1.len();
        EmbeddingSpace::from_rows(tag, d, rows).unwrap()
    }

    #[test]
    fn self_mapping_recovers_identity() {
        let rows: Vec<(String, Vec<f64>)> = (0..5)
            .map(|i| {
                (
                    format!("w{i}"),
                    vec![i as f64, (i * i) as f64 - 3.0, 1.0 + (i % 2) as f64],
                )
            })
            .collect();
        let s = space("s", rows.clone());
        let t = space("t", rows);
        let seeds =
            SeedPairs::new((0..5).map(|i| (format!("w{i}"), format!("w{i}"))).collect()).unwrap();
        let fit = learn_linear_map(&s, &t, &seeds, 0.0).unwrap();
        assert_eq!(fit.resolved_pairs, 5);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((fit.map.matrix()[(i, j)] - want).abs() < 1e-8);
            }
        }
        assert!(fit.residual < 1e-8);
    }

    #[test]
    fn singular_without_ridge() {
        let s = space(
            "s",
            vec![("a".into(), vec![1.0, 0.0]), ("b".into(), vec![2.0, 0.0])],
        );
        let seeds =
            SeedPairs::new(vec![("a".into(), "a".into()), ("b".into(), "b".into())]).unwrap();
        assert!(matches!(
            learn_linear_map(&s, &s, &seeds, 0.0),
            Err(Error::Singular(_))
        ));
        assert!(learn_linear_map(&s, &s, &seeds, 1e-3).is_ok());
        let none = SeedPairs::new(vec![("x".into(), "y".into())]).unwrap();
        assert!(matches!(
            learn_linear_map(&s, &s, &none, 0.0),
            Err(Error::Insufficient(_))
        ));
    }

    #[test]
    fn center_mapping_scales() {
        assert_eq!(
            map_center(&LinearMap::identity(2), &[1.0, -2.0])
                .unwrap()
                .as_slice(),
            &[1.0, -2.0]
        );
        let double = LinearMap::new(DMatrix::identity(2, 2) * 2.0).unwrap();
        assert_eq!(
            map_center(&double, &[1.0, -2.0]).unwrap().as_slice(),
            &[2.0, -4.0]
        );
    }
}
