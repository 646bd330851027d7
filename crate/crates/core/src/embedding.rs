//! Word-embedding tables: loading, distances, phrase vectors, neighbor search
//! and a 2-D PCA projection for plotting.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Deref;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dictionary::Phrase;
use crate::error::{check_dim, Error, Result};
use crate::exec::{self, Execution};

/// A finite embedding vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if let Some(i) = components.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite component {} at index {i}",
                components[i]
            )));
        }
        Ok(Vector(components))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    /// Wraps components already known to be finite.
    pub(crate) fn from_finite(components: Vec<f64>) -> Self {
        debug_assert!(components.iter().all(|c| c.is_finite()));
        Vector(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Euclidean distance `sqrt(sum (a_i - b_i)^2)`.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(distance(a, b))
}

/// Immutable token → vector table with a fixed dimension.
///
/// Rows keep file order, which for word2vec-style dumps is frequency order.
#[derive(Clone, Debug)]
pub struct EmbeddingSpace {
    dim: usize,
    language_tag: String,
    tokens: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

/// Side information gathered while loading an embedding file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub declared_count: usize,
    pub rows_read: usize,
    pub duplicates: usize,
}

impl EmbeddingSpace {
    /// Builds a space from `(token, components)` rows. Tokens are trimmed;
    /// the first occurrence of a duplicated token wins.
    pub fn from_rows<I, S>(language_tag: impl Into<String>, dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut builder = SpaceBuilder::new(language_tag.into(), dim)?;
        for (token, v) in rows {
            builder.push(token.as_ref(), v)?;
        }
        Ok(builder.finish().0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn language_tag(&self) -> &str {
        &self.language_tag
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, row: usize) -> &str {
        &self.tokens[row]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token.trim()).copied()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index_of(token).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .map(move |(i, t)| (t.as_str(), self.row(i)))
    }

    /// Writes the text format read by [`load_embeddings`]. Components are
    /// printed in shortest round-trip form, so reloading is bit-exact.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (token, v) in self.iter() {
            out.write_all(token.as_bytes())?;
            for c in v {
                write!(out, " {c}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

struct SpaceBuilder {
    space: EmbeddingSpace,
    duplicates: usize,
}

impl SpaceBuilder {
    fn new(language_tag: String, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(SpaceBuilder {
            space: EmbeddingSpace {
                dim,
                language_tag,
                tokens: Vec::new(),
                data: Vec::new(),
                index: HashMap::new(),
            },
            duplicates: 0,
        })
    }

    fn push(&mut self, token: &str, v: Vec<f64>) -> Result<()> {
        let token = token.trim();
        if token.is_empty() {
            return Err(Error::InvalidInput("empty token".into()));
        }
        check_dim(self.space.dim, v.len())?;
        let v = Vector::new(v)?;
        if self.space.index.contains_key(token) {
            self.duplicates += 1;
            return Ok(());
        }
        let row = self.space.tokens.len();
        self.space.index.insert(token.to_owned(), row);
        self.space.tokens.push(token.to_owned());
        self.space.data.extend_from_slice(&v);
        Ok(())
    }

    fn finish(self) -> (EmbeddingSpace, usize) {
        (self.space, self.duplicates)
    }
}

/// Reads `"<count> <dim>"` then `"<token> <v1> ... <vd>"` rows.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    source: &Path,
    language_tag: &str,
    expected_dim: Option<usize>,
) -> Result<(EmbeddingSpace, LoadReport)> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((_, Ok(l))) => break l,
            Some((i, Err(e))) => return Err(Error::parse(source, i + 1, e.to_string())),
            None => return Err(Error::parse(source, 1, "missing header")),
        }
    };
    let mut fields = header.split_whitespace();
    let (count, dim) = match (fields.next(), fields.next(), fields.next()) {
        (Some(c), Some(d), None) => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => {
                return Err(Error::parse(
                    source,
                    1,
                    format!("malformed header {header:?}"),
                ))
            }
        },
        _ => {
            return Err(Error::parse(
                source,
                1,
                format!("malformed header {header:?}"),
            ))
        }
    };
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(Error::DimensionMismatch {
                expected,
                actual: dim,
            });
        }
    }

    let mut builder = SpaceBuilder::new(language_tag.to_owned(), dim)?;
    let mut rows_read = 0;
    let mut components = Vec::with_capacity(dim);
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("nonblank line has a field");
        components.clear();
        for f in fields {
            match f.parse::<f64>() {
                Ok(x) if x.is_finite() => components.push(x),
                _ => {
                    return Err(Error::parse(
                        source,
                        lineno,
                        format!("invalid component {f:?} for token {token:?}"),
                    ))
                }
            }
        }
        if components.len() != dim {
            return Err(Error::parse(
                source,
                lineno,
                format!(
                    "token {token:?} has {} components, expected {dim}",
                    components.len()
                ),
            ));
        }
        builder.push(token, components.clone())?;
        rows_read += 1;
    }
    let (space, duplicates) = builder.finish();
    Ok((
        space,
        LoadReport {
            declared_count: count,
            rows_read,
            duplicates,
        },
    ))
}

/// Loads an embedding text file. The language tag is the file stem.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<EmbeddingSpace> {
    load_embeddings_with_report(path, expected_dim).map(|(s, _)| s)
}

pub fn load_embeddings_with_report(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<(EmbeddingSpace, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_owned();
    read_embeddings(BufReader::new(file), path, &tag, expected_dim)
}

/// Mean of the vectors of the phrase tokens present in `space`; `None` when
/// no token is present.
pub fn phrase_vector(space: &EmbeddingSpace, phrase: &Phrase) -> Option<Vector> {
    let mut sum = vec![0.0; space.dim()];
    let mut present = 0usize;
    for token in phrase.tokens() {
        if let Some(v) = space.get(token) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            present += 1;
        }
    }
    if present == 0 {
        return None;
    }
    let n = present as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Some(Vector::from_finite(sum))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub token: String,
    pub distance: f64,
}

/// The `k` closest tokens to `query` that are not in `exclude`, ascending by
/// distance with ties broken by token order.
pub fn nearest_neighbors(
    space: &EmbeddingSpace,
    query: &[f64],
    k: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<Neighbor>> {
    nearest_neighbors_with(space, query, k, exclude, Execution::default())
}

pub fn nearest_neighbors_with(
    space: &EmbeddingSpace,
    query: &[f64],
    k: usize,
    exclude: &HashSet<String>,
    exec: Execution,
) -> Result<Vec<Neighbor>> {
    check_dim(space.dim(), query.len())?;
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let dists = exec::map_range(exec, space.len(), |i| distance(space.row(i), query));
    let mut scored: Vec<(f64, usize)> = dists
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| !exclude.contains(space.token(i)))
        .map(|(i, d)| (d, i))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| {
        a.0.total_cmp(&b.0)
            .then_with(|| space.token(a.1).cmp(space.token(b.1)))
    };
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    Ok(scored
        .into_iter()
        .map(|(d, i)| Neighbor {
            token: space.token(i).to_owned(),
            distance: d,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projected {
    pub token: String,
    pub x: f64,
    pub y: f64,
}

/// Projects the selected tokens onto the top two principal components of
/// their centered vectors. Each component is signed so that its first
/// nonzero loading is positive. Tokens missing from the space are skipped.
pub fn project_2d<S: AsRef<str>>(space: &EmbeddingSpace, tokens: &[S]) -> Result<Vec<Projected>> {
    let rows: Vec<(&str, &[f64])> = tokens
        .iter()
        .filter_map(|t| {
            let t = t.as_ref().trim();
            space.get(t).map(|v| (t, v))
        })
        .collect();
    if rows.len() < 2 {
        return Err(Error::Insufficient(format!(
            "projection needs at least 2 tokens present in the space, found {}",
            rows.len()
        )));
    }
    let d = space.dim();
    let n = rows.len();
    let mut mean = vec![0.0; d];
    for (_, v) in &rows {
        mean.iter_mut().zip(*v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i].1[j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut axes = Vec::with_capacity(2);
    for &c in order.iter().take(2) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let flip = axis
            .iter()
            .find(|x| x.abs() > 1e-12)
            .is_some_and(|x| *x < 0.0);
        if flip {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push(axis);
    }
    let project = |i: usize, axis: Option<&Vec<f64>>| -> f64 {
        axis.map_or(0.0, |a| {
            centered.row(i).iter().zip(a).map(|(x, y)| x * y).sum()
        })
    };
    Ok((0..n)
        .map(|i| Projected {
            token: rows[i].0.to_owned(),
            x: project(i, axes.first()),
            y: project(i, axes.get(1)),
        })
        .collect())
}

/// TSV `token\tx\ty`, one row per point.
pub fn write_projection<W: Write>(points: &[Projected], mut out: W) -> std::io::Result<()> {
    for p in points {
        writeln!(out, "{}\t{}\t{}", p.token, p.x, p.y)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<(EmbeddingSpace, LoadReport)> {
        read_embeddings(Cursor::new(text), Path::new("mem"), "xx", None)
    }

    fn space(rows: &[(&str, &[f64])]) -> EmbeddingSpace {
        let dim = rows[0].1.len();
        EmbeddingSpace::from_rows("xx", dim, rows.iter().map(|(t, v)| (*t, v.to_vec()))).unwrap()
    }

    #[test]
    fn loads_minimal_file() {
        let (s, report) = parse("2 3\na 1 0 0\nb 0 1 0").unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.len(), 2);
        assert_eq!(s.get("b").unwrap(), &[0.0, 1.0, 0.0]);
        assert_eq!(report.duplicates, 0);
    }

    #[test]
    fn rejects_nan_component() {
        let err = parse("1 3\na 1 0 nan").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_bad_header_and_arity() {
        assert!(matches!(
            parse("two 3\na 1 2 3"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse("1 3\na 1 2"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse("1 3\na 1 x 2"), Err(Error::Parse { .. })));
        let err = read_embeddings(Cursor::new("1 3\na 1 2 3"), Path::new("m"), "x", Some(4));
        assert!(matches!(
            err,
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 3
            })
        ));
    }

    #[test]
    fn duplicate_tokens_keep_first() {
        let (s, report) = parse("3 1\na 1\na 2\nb 3\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get("a").unwrap(), &[1.0]);
        assert_eq!(report.duplicates, 1);
        assert_eq!(report.rows_read, 3);
    }

    #[test]
    fn phrase_vector_means() {
        let s = space(&[("w", &[1.0, 2.0]), ("a", &[0.0, 0.0]), ("b", &[2.0, 4.0])]);
        let p = |t: &[&str]| Phrase::new(t.iter().map(|x| x.to_string()).collect()).unwrap();
        assert_eq!(
            phrase_vector(&s, &p(&["w", "w"])).unwrap().as_slice(),
            &[1.0, 2.0]
        );
        assert_eq!(
            phrase_vector(&s, &p(&["a", "b"])).unwrap().as_slice(),
            &[1.0, 2.0]
        );
        assert_eq!(
            phrase_vector(&s, &p(&["b", "q"])).unwrap().as_slice(),
            &[2.0, 4.0]
        );
        assert!(phrase_vector(&s, &p(&["q"])).is_none());
    }

    #[test]
    fn distance_basics() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean_distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(euclidean_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn neighbors_exclude_and_exhaust() {
        let s = space(&[("t", &[0.0]), ("u", &[5.0]), ("v", &[1.0]), ("w", &[-1.0])]);
        let ex: HashSet<String> = ["t".to_string()].into();
        let nn = nearest_neighbors(&s, &[0.0], 1, &ex).unwrap();
        assert_eq!(nn.len(), 1);
        // v and w tie at distance 1; lexicographic order decides
        assert_eq!(nn[0].token, "v");
        let all = nearest_neighbors(&s, &[0.0], 10, &HashSet::new()).unwrap();
        let names: Vec<_> = all.iter().map(|n| n.token.as_str()).collect();
        assert_eq!(names, ["t", "v", "w", "u"]);
        assert!(nearest_neighbors(&s, &[0.0, 1.0], 1, &ex).is_err());
        assert!(nearest_neighbors(&s, &[0.0], 0, &ex).is_err());
    }

    #[test]
    fn projection_of_collinear_points_is_flat() {
        let s = space(&[
            ("a", &[0.0, 0.0, 0.0]),
            ("b", &[1.0, 2.0, 3.0]),
            ("c", &[2.0, 4.0, 6.0]),
            ("d", &[-1.5, -3.0, -4.5]),
        ]);
        let p = project_2d(&s, &["a", "b", "c", "d"]).unwrap();
        for q in &p {
            assert!(q.y.abs() < 1e-9, "{q:?}");
        }
        assert!(p[2].x > p[0].x);
    }

    #[test]
    fn projection_of_planar_points_is_isometric() {
        let pts: &[(&str, &[f64])] = &[
            ("a", &[0.0, 0.0]),
            ("b", &[3.0, 1.0]),
            ("c", &[-1.0, 2.0]),
            ("d", &[0.5, -4.0]),
        ];
        let s = space(pts);
        let p = project_2d(&s, &["a", "b", "c", "d", "missing"]).unwrap();
        assert_eq!(p.len(), 4);
        for i in 0..4 {
            for j in 0..4 {
                let orig = distance(pts[i].1, pts[j].1);
                let proj = ((p[i].x - p[j].x).powi(2) + (p[i].y - p[j].y).powi(2)).sqrt();
                assert!((orig - proj).abs() < 1e-9);
            }
        }
        assert!(project_2d(&s, &["a"]).is_err());
    }

    #[test]
    fn save_reload_is_bit_exact() {
        let s = space(&[
            ("x", &[0.1, -1e-300, 3.0e10]),
            ("y", &[-0.0, 1.0 / 3.0, 2.5]),
        ]);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let (r, _) = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        for (t, v) in s.iter() {
            let w = r.get(t).unwrap();
            assert!(v.iter().zip(w).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
