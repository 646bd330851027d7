//! The hypersphere entity model: a center `O` and radius `r` such that a
//! vector `x` is predicted to be an entity of the type iff `E(x, O) <= r`.
//!
//! Fitting starts with the mean of the training vectors as center and sweeps
//! the radius over the distinct training distances, keeping the best F1
//! against an evaluation dictionary. It then discards far training points at
//! each outlier threshold `q`, recenters, sweeps again, and repeats until the
//! F1 gain falls below tolerance.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{NeType, Phrase};
use crate::embedding::{distance, phrase_vector, EmbeddingSpace, Vector};
use crate::error::{check_dim, Error, Result};
use crate::exec::{self, Execution};

#[derive(Clone, Debug, PartialEq)]
pub struct Hypersphere {
    center: Vector,
    radius: f64,
    ne_type: NeType,
}

impl Hypersphere {
    pub fn new(center: Vector, radius: f64, ne_type: NeType) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid radius {radius}")));
        }
        if center.dim() == 0 {
            return Err(Error::InvalidInput("empty center".into()));
        }
        Ok(Hypersphere {
            center,
            radius,
            ne_type,
        })
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn ne_type(&self) -> NeType {
        self.ne_type
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Inclusive: a point exactly on the boundary is inside.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(self.ne_likelihood(x)? <= self.radius)
    }

    /// `E(x, O)`; smaller means more entity-like.
    pub fn ne_likelihood(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(distance(x, &self.center))
    }

    /// `"<type> <dim> <radius>\n<c1> ... <cd>\n"`
    pub fn to_file_string(&self) -> String {
        let mut s = format!("{} {} {}\n", self.ne_type, self.dim(), self.radius);
        for (i, c) in self.center.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            write!(s, "{c}").unwrap();
        }
        s.push('\n');
        s
    }

    pub fn parse_file_string(text: &str, source: &Path) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(source, 1, "empty sphere file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [t, d, r] = fields[..] else {
            return Err(Error::parse(
                source,
                1,
                format!("malformed sphere header {header:?}"),
            ));
        };
        let ne_type: NeType = t
            .parse()
            .map_err(|e: Error| Error::parse(source, 1, e.to_string()))?;
        let dim: usize = d
            .parse()
            .map_err(|_| Error::parse(source, 1, format!("bad dimension {d:?}")))?;
        let radius: f64 = r
            .parse()
            .map_err(|_| Error::parse(source, 1, format!("bad radius {r:?}")))?;
        let center_line = lines
            .next()
            .ok_or_else(|| Error::parse(source, 2, "missing center line"))?;
        let center = center_line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(source, 2, e.to_string()))?;
        if center.len() != dim {
            return Err(Error::parse(
                source,
                2,
                format!("center has {} components, header says {dim}", center.len()),
            ));
        }
        let center = Vector::new(center).map_err(|e| Error::parse(source, 2, e.to_string()))?;
        Hypersphere::new(center, radius, ne_type)
            .map_err(|e| Error::parse(source, 1, e.to_string()))
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

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    /// Dictionary entries with no token in the vocabulary; excluded from the rates.
    pub unresolved: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, unresolved: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        EvalReport {
            true_positive: tp,
            false_positive: fp,
            false_negative: fn_,
            unresolved,
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }

    /// `type\ttp\tfp\tfn\tprecision\trecall\tf1`
    pub fn tsv_row(&self, ne_type: NeType) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            ne_type,
            self.true_positive,
            self.false_positive,
            self.false_negative,
            self.precision,
            self.recall,
            self.f1
        )
    }

    pub const TSV_HEADER: &'static str = "type\ttp\tfp\tfn\tprecision\trecall\tf1";
}

pub(crate) fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p > 0.0 && r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Resolved evaluation dictionary plus the vocabulary rows that count as
/// false positives when inside the sphere.
struct EvalSet {
    dict_vectors: Vec<Vector>,
    unresolved: usize,
    fp_rows: Vec<usize>,
}

impl EvalSet {
    fn new(space: &EmbeddingSpace, dict: &BTreeSet<Phrase>) -> Self {
        let mut dict_vectors = Vec::with_capacity(dict.len());
        let mut unresolved = 0;
        for p in dict {
            match phrase_vector(space, p) {
                Some(v) => dict_vectors.push(v),
                None => unresolved += 1,
            }
        }
        let surface: HashSet<&str> = dict.iter().filter_map(Phrase::as_single).collect();
        let fp_rows = (0..space.len())
            .filter(|&i| !surface.contains(space.token(i)))
            .collect();
        EvalSet {
            dict_vectors,
            unresolved,
            fp_rows,
        }
    }
}

/// Scores a sphere against a dictionary. True positives are resolvable
/// entries inside the sphere, false negatives those outside, false positives
/// vocabulary tokens inside whose surface form is not an entry.
pub fn evaluate_hypersphere(
    sphere: &Hypersphere,
    space: &EmbeddingSpace,
    dict_entries: &BTreeSet<Phrase>,
) -> Result<EvalReport> {
    evaluate_hypersphere_with(sphere, space, dict_entries, Execution::default())
}

pub fn evaluate_hypersphere_with(
    sphere: &Hypersphere,
    space: &EmbeddingSpace,
    dict_entries: &BTreeSet<Phrase>,
    exec: Execution,
) -> Result<EvalReport> {
    check_dim(space.dim(), sphere.dim())?;
    let set = EvalSet::new(space, dict_entries);
    let mut tp = 0;
    for v in &set.dict_vectors {
        if sphere.contains(v)? {
            tp += 1;
        }
    }
    let fp = exec::sum_range(exec, set.fp_rows.len(), |k| {
        let row = space.row(set.fp_rows[k]);
        u64::from(distance(row, &sphere.center) <= sphere.radius)
    }) as usize;
    Ok(EvalReport::from_counts(
        tp,
        fp,
        set.dict_vectors.len() - tp,
        set.unresolved,
    ))
}

/// Outlier-discard thresholds tried after the initial fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum QGrid {
    /// Nearest-rank quantiles of the training distances to the current center.
    Quantiles(Vec<f64>),
    /// Fixed distance thresholds.
    Absolute(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RadiusCandidates {
    /// Sorted distinct distances of the training vectors to the center.
    TrainDistances,
    /// `n` evenly spaced radii between the nearest and farthest training distance.
    UniformGrid(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub q_grid: QGrid,
    pub max_iterations: usize,
    pub f1_tolerance: f64,
    pub radius_candidates: RadiusCandidates,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            q_grid: QGrid::Quantiles(vec![0.90, 0.95, 0.99, 1.0]),
            max_iterations: 20,
            f1_tolerance: 1e-4,
            radius_candidates: RadiusCandidates::TrainDistances,
            execution: Execution::default(),
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        let grid = match &self.q_grid {
            QGrid::Quantiles(g) => {
                if g.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
                    return Err(Error::InvalidInput("q quantiles must lie in (0, 1]".into()));
                }
                g
            }
            QGrid::Absolute(g) => {
                if g.iter().any(|&q| !(q > 0.0 && q.is_finite())) {
                    return Err(Error::InvalidInput("q thresholds must be positive".into()));
                }
                g
            }
        };
        if grid.is_empty() {
            return Err(Error::InvalidInput("q grid is empty".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations must be positive".into(),
            ));
        }
        if !(self.f1_tolerance > 0.0) {
            return Err(Error::InvalidInput("f1_tolerance must be positive".into()));
        }
        if self.radius_candidates == RadiusCandidates::UniformGrid(0) {
            return Err(Error::InvalidInput(
                "uniform grid needs at least one radius".into(),
            ));
        }
        Ok(())
    }

    /// Thresholds for training distances `sorted` (ascending) to the current center.
    pub(crate) fn thresholds(&self, sorted: &[f64]) -> Vec<f64> {
        match &self.q_grid {
            QGrid::Absolute(g) => g.clone(),
            QGrid::Quantiles(g) => g.iter().map(|&p| nearest_rank(sorted, p)).collect(),
        }
    }

    pub(crate) fn candidates(&self, sorted: &[f64]) -> Vec<f64> {
        match self.radius_candidates {
            RadiusCandidates::TrainDistances => {
                let mut c = sorted.to_vec();
                c.dedup();
                c
            }
            RadiusCandidates::UniformGrid(n) => {
                let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
                if n == 1 || lo == hi {
                    return vec![hi];
                }
                (0..n)
                    .map(|i| {
                        if i + 1 == n {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / (n - 1) as f64
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Nearest-rank quantile of an ascending sample.
pub(crate) fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub sphere: Hypersphere,
    pub report: EvalReport,
    /// Outlier threshold whose recentering produced the sphere; `None` for
    /// the initial mean center.
    pub q_threshold: Option<f64>,
    /// Refinement rounds run.
    pub iterations: usize,
    /// Training vectors averaged into the final center.
    pub train_used: usize,
}

#[derive(Clone, Debug)]
struct Candidate {
    center: Vec<f64>,
    radius: f64,
    report: EvalReport,
    q: Option<f64>,
    train_used: usize,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        let q = |c: &Candidate| c.q.unwrap_or(f64::INFINITY);
        self.report
            .f1
            .total_cmp(&other.report.f1)
            .then_with(|| other.radius.total_cmp(&self.radius))
            .then_with(|| q(other).total_cmp(&q(self)))
            .is_gt()
    }
}

fn mean_of(vectors: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for v in vectors {
        m.iter_mut().zip(*v).for_each(|(a, x)| *a += x);
    }
    let n = vectors.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

struct Fitter<'a> {
    space: &'a EmbeddingSpace,
    eval: EvalSet,
    config: &'a FitConfig,
}

impl Fitter<'_> {
    /// Best radius for a fixed center over the candidate family of `members`.
    fn best_for_center(&self, center: Vec<f64>, members: &[&[f64]], q: Option<f64>) -> Candidate {
        let mut train_d: Vec<f64> = members.iter().map(|v| distance(v, &center)).collect();
        train_d.sort_by(f64::total_cmp);
        let candidates = self.config.candidates(&train_d);

        let mut dict_d: Vec<f64> = self
            .eval
            .dict_vectors
            .iter()
            .map(|v| distance(v, &center))
            .collect();
        dict_d.sort_by(f64::total_cmp);
        let rows = &self.eval.fp_rows;
        let mut fp_d = exec::map_range(self.config.execution, rows.len(), |k| {
            distance(self.space.row(rows[k]), &center)
        });
        fp_d.sort_by(f64::total_cmp);

        let mut best: Option<(f64, EvalReport)> = None;
        for &r in &candidates {
            let tp = dict_d.partition_point(|&d| d <= r);
            let fp = fp_d.partition_point(|&d| d <= r);
            let report = EvalReport::from_counts(tp, fp, dict_d.len() - tp, self.eval.unresolved);
            if best.as_ref().is_none_or(|(_, b)| report.f1 > b.f1) {
                best = Some((r, report));
            }
        }
        let (radius, report) = best.expect("candidate family is nonempty");
        Candidate {
            center,
            radius,
            report,
            q,
            train_used: members.len(),
        }
    }
}

/// Fits the sphere for one entity type.
///
/// `train` supplies the center; `eval_dict` is the dictionary the F1 score is
/// measured against. Returns the best sphere seen over all refinement rounds,
/// ties going to the smaller radius, then the smaller threshold.
pub fn fit_hypersphere(
    space: &EmbeddingSpace,
    train: &BTreeSet<Phrase>,
    eval_dict: &BTreeSet<Phrase>,
    config: &FitConfig,
    ne_type: NeType,
) -> Result<FitOutcome> {
    config.validate()?;
    let train_vecs: Vec<Vector> = train
        .iter()
        .filter_map(|p| phrase_vector(space, p))
        .collect();
    if train_vecs.len() < 2 {
        return Err(Error::Insufficient(format!(
            "{ne_type}: {} resolvable training phrases, need at least 2",
            train_vecs.len()
        )));
    }
    let all: Vec<&[f64]> = train_vecs.iter().map(|v| v.as_slice()).collect();
    let fitter = Fitter {
        space,
        eval: EvalSet::new(space, eval_dict),
        config,
    };

    let mut best = fitter.best_for_center(mean_of(&all, space.dim()), &all, None);
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let previous = best.report.f1;
        let anchor = best.center.clone();
        let dists: Vec<f64> = all.iter().map(|v| distance(v, &anchor)).collect();
        let mut sorted = dists.clone();
        sorted.sort_by(f64::total_cmp);
        for q in config.thresholds(&sorted) {
            let kept: Vec<&[f64]> = all
                .iter()
                .zip(&dists)
                .filter(|(_, d)| **d <= q)
                .map(|(v, _)| *v)
                .collect();
            if kept.is_empty() {
                continue;
            }
            let cand = fitter.best_for_center(mean_of(&kept, space.dim()), &kept, Some(q));
            if cand.beats(&best) {
                best = cand;
            }
        }
        if best.report.f1 - previous < config.f1_tolerance {
            break;
        }
    }

    Ok(FitOutcome {
        sphere: Hypersphere::new(Vector::from_finite(best.center), best.radius, ne_type)?,
        report: best.report,
        q_threshold: best.q,
        iterations,
        train_used: best.train_used,
    })
}
