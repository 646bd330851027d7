//! Cross-space transfer of entity hyperspheres.
//!
//! Two routes are provided. The affine route learns a linear map from a few
//! seed translation pairs, projects the source center through it, and then
//! re-solves the center and the radius ratio `K` from the requirement that
//! every seed pair cuts its sphere at the same relative distance. The EMD
//! route aligns two whole vocabularies by alternating optimal transport with
//! weighted least squares.
//!
//! Maps use the row-vector convention: a source vector `x` (as a row) maps to
//! `x W`, so `W` has shape `d_source x d_target`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::dictionary::Phrase;
use crate::embedding::{nearest_neighbors, EmbeddingSpace, Vector};
use crate::error::{check_dim, Error, Result};
use crate::hypersphere::Hypersphere;

mod affine;
mod emd;
mod linear;
mod simplex;
mod sinkhorn;
mod transport;

pub use affine::{refine_affine, AffineRefinement, RefineMethod};
pub use emd::{alternating_emd_fit, EmdConfig, EmdFit, EmdInit};
pub use linear::{learn_linear_map, map_center, procrustes, LinearFit};
pub use transport::{
    cost_matrix, solve_transport, transport_cost, CostMatrix, DiscreteDistribution,
    TransportConfig, TransportMode, TransportPlan,
};

/// Aligned `(source token, target token)` translation pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedPairs {
    pairs: Vec<(String, String)>,
}

impl SeedPairs {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Insufficient("seed pair list is empty".into()));
        }
        Ok(SeedPairs { pairs })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs whose tokens both resolve, as `(source row, target row)`.
    pub fn resolve<'a>(
        &self,
        source: &'a EmbeddingSpace,
        target: &'a EmbeddingSpace,
    ) -> Vec<(&'a [f64], &'a [f64])> {
        self.pairs
            .iter()
            .filter_map(|(s, t)| Some((source.get(s)?, target.get(t)?)))
            .collect()
    }

    /// Reads `source\ttarget` lines; blank and `#` lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((s, t)) = line.split_once('\t') else {
                return Err(Error::parse(path, i + 1, "expected source<TAB>target"));
            };
            let (s, t) = (s.trim(), t.trim());
            if s.is_empty() || t.is_empty() {
                return Err(Error::parse(path, i + 1, "empty token in seed pair"));
            }
            pairs.push((s.to_owned(), t.to_owned()));
        }
        SeedPairs::new(pairs)
            .map_err(|_| Error::Insufficient(format!("{}: no seed pairs", path.display())))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (s, t) in &self.pairs {
            writeln!(out, "{s}\t{t}")?;
        }
        out.flush()
    }
}

/// A `d_source x d_target` linear map applied to row vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::InvalidInput("empty linear map".into()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "linear map has non-finite entries".into(),
            ));
        }
        Ok(LinearMap { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        LinearMap {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `x W` for a source row vector `x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vector> {
        check_dim(self.rows(), x.len())?;
        Ok(Vector::from_finite(self.apply_unchecked(x)))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.cols())
            .map(|j| {
                self.matrix
                    .column(j)
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum()
            })
            .collect()
    }

    /// `"<rows> <cols>"` then one line per row of `W`. Rows index source
    /// dimensions, so a source row vector `x` maps to `x W`.
    pub fn to_file_string(&self) -> String {
        let mut s = format!("{} {}\n", self.rows(), self.cols());
        for i in 0..self.rows() {
            let row: Vec<String> = self.matrix.row(i).iter().map(|x| x.to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse_file_string(text: &str, source: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(source, 1, "empty map file"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| Error::parse(source, 1, format!("malformed header {header:?}")))?;
        let [rows, cols] = dims[..] else {
            return Err(Error::parse(
                source,
                1,
                format!("malformed header {header:?}"),
            ));
        };
        let mut data = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        for (i, line) in lines {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e: std::num::ParseFloatError| {
                    Error::parse(source, i + 1, e.to_string())
                })?;
            if vals.len() != cols {
                return Err(Error::parse(
                    source,
                    i + 1,
                    format!("expected {cols} values"),
                ));
            }
            data.extend(vals);
            seen += 1;
        }
        if seen != rows {
            return Err(Error::parse(
                source,
                1,
                format!("expected {rows} rows, found {seen}"),
            ));
        }
        LinearMap::new(DMatrix::from_row_slice(rows, cols, &data))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_file_string(&text, path)
    }
}

/// A source sphere carried into the target space, with the pieces that
/// produced it.
#[derive(Clone, Debug)]
pub struct MappedSphere {
    pub sphere: Hypersphere,
    pub linear: LinearFit,
    pub refinement: AffineRefinement,
}

/// Seed-pair pipeline: learn `W`, project the center through it, then refine
/// center and radius ratio against the seed distances.
pub fn map_hypersphere(
    source_sphere: &Hypersphere,
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    seeds: &SeedPairs,
    ridge: f64,
) -> Result<MappedSphere> {
    let linear = learn_linear_map(source, target, seeds, ridge)?;
    let init = map_center(&linear.map, source_sphere.center())?;
    let refinement = refine_affine(source, target, seeds, source_sphere, &init)?;
    let sphere = Hypersphere::new(
        refinement.mapped_center.clone(),
        refinement.mapped_radius,
        source_sphere.ne_type(),
    )?;
    Ok(MappedSphere {
        sphere,
        linear,
        refinement,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateEntity {
    pub token: String,
    pub distance: f64,
    pub inside: bool,
}

/// The `n` target tokens nearest the mapped center, flagged by whether they
/// fall inside the mapped radius. These form a candidate entity list for a
/// language without a dictionary.
pub fn candidate_entities(
    target: &EmbeddingSpace,
    mapped_sphere: &Hypersphere,
    n: usize,
) -> Result<Vec<CandidateEntity>> {
    let hits = nearest_neighbors(target, mapped_sphere.center(), n, &Default::default())?;
    Ok(hits
        .into_iter()
        .map(|h| CandidateEntity {
            inside: h.distance <= mapped_sphere.radius(),
            token: h.token,
            distance: h.distance,
        })
        .collect())
}

/// TSV `rank\ttoken\tdistance\tinside` with 1-based ranks.
pub fn write_candidates<W: Write>(cands: &[CandidateEntity], mut out: W) -> std::io::Result<()> {
    writeln!(out, "rank\ttoken\tdistance\tinside")?;
    for (i, c) in cands.iter().enumerate() {
        writeln!(out, "{}\t{}\t{}\t{}", i + 1, c.token, c.distance, c.inside)?;
    }
    out.flush()
}

/// Candidates as single-token phrases, ready to seed a dictionary.
pub fn candidates_as_phrases(cands: &[CandidateEntity], inside_only: bool) -> Vec<Phrase> {
    cands
        .iter()
        .filter(|c| !inside_only || c.inside)
        .filter_map(|c| Phrase::single(c.token.clone()).ok())
        .collect()
}
