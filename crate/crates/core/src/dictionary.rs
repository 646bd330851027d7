//! Named-entity dictionaries: one file per entity type, train/test splits and
//! embedding coverage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{phrase_vector, EmbeddingSpace};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NeType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "ORG")]
    Org,
}

impl NeType {
    pub const ALL: [NeType; 3] = [NeType::Per, NeType::Loc, NeType::Org];

    pub fn as_str(self) -> &'static str {
        match self {
            NeType::Per => "PER",
            NeType::Loc => "LOC",
            NeType::Org => "ORG",
        }
    }
}

impl fmt::Display for NeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "PER" => Ok(NeType::Per),
            "LOC" => Ok(NeType::Loc),
            "ORG" => Ok(NeType::Org),
            other => Err(Error::InvalidInput(format!(
                "unknown entity type {other:?} (expected PER, LOC or ORG)"
            ))),
        }
    }
}

/// A single- or multi-word surface form.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Phrase(Vec<String>);

impl Phrase {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(|t| t.trim().to_owned()).collect();
        if tokens.is_empty() || tokens.iter().any(String::is_empty) {
            return Err(Error::InvalidInput(format!("invalid phrase {tokens:?}")));
        }
        Ok(Phrase(tokens))
    }

    /// Splits on whitespace; `None` for a blank line.
    pub fn parse(line: &str) -> Option<Self> {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        (!tokens.is_empty()).then_some(Phrase(tokens))
    }

    pub fn single(token: impl Into<String>) -> Result<Self> {
        Phrase::new(vec![token.into()])
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The vocabulary token this phrase equals, if it is a single word.
    pub fn as_single(&self) -> Option<&str> {
        match self.0.as_slice() {
            [t] => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Phrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NeDictionary {
    pub language_tag: String,
    entries: BTreeMap<NeType, BTreeSet<Phrase>>,
}

impl NeDictionary {
    pub fn new(language_tag: impl Into<String>) -> Self {
        NeDictionary {
            language_tag: language_tag.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, ne_type: NeType, phrase: Phrase) -> bool {
        self.entries.entry(ne_type).or_default().insert(phrase)
    }

    /// Entries of one type; empty when the type is absent.
    pub fn entries(&self, ne_type: NeType) -> &BTreeSet<Phrase> {
        static EMPTY: BTreeSet<Phrase> = BTreeSet::new();
        self.entries.get(&ne_type).unwrap_or(&EMPTY)
    }

    pub fn types(&self) -> impl Iterator<Item = NeType> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Union with another (partial) dictionary.
    pub fn merge(&mut self, other: NeDictionary) {
        for (t, set) in other.entries {
            self.entries.entry(t).or_default().extend(set);
        }
    }
}

/// Reads one entity per line; blank lines and `#` comments are skipped and
/// duplicates collapse.
pub fn load_dictionary(path: impl AsRef<Path>, ne_type: NeType) -> Result<NeDictionary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    let mut dict = NeDictionary::new(tag);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if line.trim_start().starts_with('#') {
            continue;
        }
        if let Some(p) = Phrase::parse(&line) {
            dict.insert(ne_type, p);
        }
    }
    if dict.is_empty() {
        return Err(Error::Insufficient(format!(
            "{}: no entries after filtering",
            path.display()
        )));
    }
    Ok(dict)
}

/// Writes the entries of one type, one per line, in sorted order.
pub fn write_dictionary<W: std::io::Write>(
    dict: &NeDictionary,
    ne_type: NeType,
    mut out: W,
) -> std::io::Result<()> {
    for p in dict.entries(ne_type) {
        writeln!(out, "{p}")?;
    }
    out.flush()
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: NeDictionary,
    pub test: NeDictionary,
    pub seed: u64,
    pub ratio: f64,
}

/// Number of training entries for `n` items: `floor(ratio * n)`, guarded
/// against representation error (`0.29 * 100` is `28.999...`).
pub(crate) fn train_size(ratio: f64, n: usize) -> usize {
    let raw = (ratio * n as f64 + 1e-9).floor() as usize;
    raw.min(n.saturating_sub(1))
}

/// Per-type seeded shuffle then `floor(ratio * n)` entries to train, the
/// rest to test.
pub fn split_dictionary(dict: &NeDictionary, ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "split ratio {ratio} not in (0, 1)"
        )));
    }
    let mut train = NeDictionary::new(dict.language_tag.clone());
    let mut test = NeDictionary::new(dict.language_tag.clone());
    for (&t, set) in &dict.entries {
        if set.len() < 2 {
            return Err(Error::Insufficient(format!(
                "{t} has {} entries; splitting needs at least 2",
                set.len()
            )));
        }
        let mut items: Vec<&Phrase> = set.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        items.shuffle(&mut rng);
        let cut = train_size(ratio, items.len());
        for (i, p) in items.into_iter().enumerate() {
            let side = if i < cut { &mut train } else { &mut test };
            side.insert(t, p.clone());
        }
    }
    Ok(DatasetSplit {
        train,
        test,
        seed,
        ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coverage {
    pub covered: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Per type, how many entries resolve to a vector (at least one token known).
pub fn coverage_report(dict: &NeDictionary, space: &EmbeddingSpace) -> BTreeMap<NeType, Coverage> {
    dict.entries
        .iter()
        .map(|(&t, set)| {
            let covered = set
                .iter()
                .filter(|p| phrase_vector(space, p).is_some())
                .count();
            let total = set.len();
            let fraction = if total == 0 {
                0.0
            } else {
                covered as f64 / total as f64
            };
            (
                t,
                Coverage {
                    covered,
                    total,
                    fraction,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn dict_of(n: usize) -> NeDictionary {
        let mut d = NeDictionary::new("en");
        for i in 0..n {
            d.insert(NeType::Loc, Phrase::single(format!("city{i}")).unwrap());
        }
        d
    }

    #[test]
    fn loads_single_and_multi_word_entries() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "Paris\nNew York\n\n# comment\nParis\n  New   York \n").unwrap();
        let d = load_dictionary(f.path(), NeType::Loc).unwrap();
        let got: Vec<_> = d
            .entries(NeType::Loc)
            .iter()
            .map(|p| p.tokens().to_vec())
            .collect();
        assert_eq!(
            got,
            vec![vec!["New".to_string(), "York".into()], vec!["Paris".into()]]
        );
        assert!(d.entries(NeType::Per).is_empty());
    }

    #[test]
    fn empty_dictionary_file_is_an_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "# only comments\n\n").unwrap();
        assert!(matches!(
            load_dictionary(f.path(), NeType::Per),
            Err(Error::Insufficient(_))
        ));
        assert!(matches!(
            load_dictionary("/nonexistent/dict.txt", NeType::Per),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn nine_to_one_split() {
        let s = split_dictionary(&dict_of(10), 0.9, 42).unwrap();
        assert_eq!(s.train.entries(NeType::Loc).len(), 9);
        assert_eq!(s.test.entries(NeType::Loc).len(), 1);
        let again = split_dictionary(&dict_of(10), 0.9, 42).unwrap();
        assert_eq!(s.test, again.test);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(split_dictionary(&dict_of(10), 1.0, 1).is_err());
        assert!(split_dictionary(&dict_of(10), 0.0, 1).is_err());
        assert!(matches!(
            split_dictionary(&dict_of(1), 0.5, 1),
            Err(Error::Insufficient(_))
        ));
    }

    #[test]
    fn train_size_rounding() {
        assert_eq!(train_size(0.29, 100), 29);
        assert_eq!(train_size(0.9, 10), 9);
        assert_eq!(train_size(0.99, 2), 1);
    }

    #[test]
    fn coverage_extremes() {
        let space =
            EmbeddingSpace::from_rows("en", 1, [("city0", vec![0.0]), ("city1", vec![1.0])])
                .unwrap();
        let full = coverage_report(&dict_of(2), &space);
        assert_eq!(full[&NeType::Loc].fraction, 1.0);
        let mut none = NeDictionary::new("en");
        none.insert(NeType::Org, Phrase::single("acme").unwrap());
        assert_eq!(coverage_report(&none, &space)[&NeType::Org].fraction, 0.0);
    }

    #[test]
    fn ne_type_round_trips_through_strings() {
        for t in NeType::ALL {
            assert_eq!(t.to_string().parse::<NeType>().unwrap(), t);
        }
        assert!("MISC".parse::<NeType>().is_err());
    }
}
