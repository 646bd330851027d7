//! Z-scored sphere distances as a 3-D soft feature per token.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dictionary::NeType;
use crate::embedding::{distance, EmbeddingSpace};
use crate::error::{check_dim, Error, Result};
use crate::exec::{self, Execution};
use crate::hypersphere::Hypersphere;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub token: String,
    pub z_per: f64,
    pub z_loc: f64,
    pub z_org: f64,
}

impl FeatureRow {
    pub fn get(&self, t: NeType) -> f64 {
        match t {
            NeType::Per => self.z_per,
            NeType::Loc => self.z_loc,
            NeType::Org => self.z_org,
        }
    }
}

/// Population moments of one type's distance column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    /// `std == 0`; the column is reported as all zeros.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    /// Sorted by token.
    pub rows: Vec<FeatureRow>,
    pub stats: BTreeMap<NeType, ColumnStats>,
}

pub fn compute_features(
    space: &EmbeddingSpace,
    spheres: &BTreeMap<NeType, Hypersphere>,
) -> Result<FeatureSet> {
    compute_features_with(space, spheres, Execution::default())
}

/// `z = (E(x, O) - mu) / sigma` per type, with `mu` and the population
/// `sigma` taken over the whole vocabulary.
pub fn compute_features_with(
    space: &EmbeddingSpace,
    spheres: &BTreeMap<NeType, Hypersphere>,
    exec: Execution,
) -> Result<FeatureSet> {
    let mut centers = Vec::with_capacity(3);
    for t in NeType::ALL {
        let s = spheres
            .get(&t)
            .ok_or_else(|| Error::InvalidInput(format!("no {t} sphere given")))?;
        check_dim(space.dim(), s.dim())?;
        centers.push(s.center().as_slice());
    }
    if space.is_empty() {
        return Err(Error::Insufficient("empty vocabulary".into()));
    }

    let dists: Vec<[f64; 3]> = exec::map_range(exec, space.len(), |i| {
        let x = space.row(i);
        [
            distance(x, centers[0]),
            distance(x, centers[1]),
            distance(x, centers[2]),
        ]
    });
    let n = dists.len() as f64;
    let mut stats = BTreeMap::new();
    let mut moments = [(0.0, 0.0); 3];
    for (k, t) in NeType::ALL.into_iter().enumerate() {
        let mean = dists.iter().map(|d| d[k]).sum::<f64>() / n;
        let var = dists.iter().map(|d| (d[k] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        // relative floor: spreads at rounding level are treated as constant
        let degenerate = std <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE);
        stats.insert(
            t,
            ColumnStats {
                mean,
                std,
                degenerate,
            },
        );
        moments[k] = (mean, if degenerate { 0.0 } else { std });
    }
    let z = |k: usize, d: f64| {
        let (mean, std) = moments[k];
        if std == 0.0 {
            0.0
        } else {
            (d - mean) / std
        }
    };

    let mut order: Vec<usize> = (0..space.len()).collect();
    order.sort_by(|&a, &b| space.token(a).cmp(space.token(b)));
    // columns follow NeType::ALL: PER, LOC, ORG
    let rows = order
        .into_iter()
        .map(|i| FeatureRow {
            token: space.token(i).to_owned(),
            z_per: z(0, dists[i][0]),
            z_loc: z(1, dists[i][1]),
            z_org: z(2, dists[i][2]),
        })
        .collect();
    Ok(FeatureSet { rows, stats })
}

pub const FEATURE_TSV_HEADER: &str = "token\tz_per\tz_loc\tz_org";

pub fn write_features<W: Write>(rows: &[FeatureRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{FEATURE_TSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}",
            r.token, r.z_per, r.z_loc, r.z_org
        )?;
    }
    out.flush()
}

pub fn export_features(rows: &[FeatureRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_features(rows, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == FEATURE_TSV_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing feature header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        let [token, p, l, o] = cols[..] else {
            return Err(Error::parse(path, i + 1, "expected 4 columns"));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(path, i + 1, format!("{s:?}: {e}")))
        };
        rows.push(FeatureRow {
            token: token.to_owned(),
            z_per: num(p)?,
            z_loc: num(l)?,
            z_org: num(o)?,
        });
    }
    Ok(rows)
}
