use std::collections::BTreeSet;
use std::fs;

use nesphere::{
    coverage_report, load_dictionary, split_dictionary, EmbeddingSpace, NeDictionary, NeType,
    Phrase,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn generated_names(n: usize) -> Vec<String> {
    let syllables = ["ka", "ri", "to", "mo", "ne", "su", "la", "vi"];
    (0..n)
        .map(|i| {
            let first: String = (0..3).map(|k| syllables[(i >> (3 * k)) & 7]).collect();
            format!("{first} N{}", i / 512)
        })
        .collect()
}

#[test]
fn generated_name_file_loads_with_its_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("per.txt");
    let names = generated_names(1000);
    let mut text = String::from("# generated\n");
    for n in &names {
        text.push_str(&format!("  {n}\n"));
    }
    text.push_str(&format!("{}\n\n", names[17]));
    fs::write(&path, text).unwrap();
    let dict = load_dictionary(&path, NeType::Per).unwrap();
    assert_eq!(dict.entries(NeType::Per).len(), 1000);
    assert!(dict.entries(NeType::Loc).is_empty());
    assert!(dict.entries(NeType::Per).iter().all(|p| p.len() == 2));
}

#[test]
fn case_is_significant() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loc.txt");
    fs::write(&path, "Paris\nparis\nNew York\n").unwrap();
    let dict = load_dictionary(&path, NeType::Loc).unwrap();
    assert_eq!(dict.entries(NeType::Loc).len(), 3);
}

fn random_dict(rng: &mut ChaCha8Rng) -> NeDictionary {
    let mut d = NeDictionary::new("xx");
    for t in NeType::ALL {
        let n = rng.random_range(2..200);
        for i in 0..n {
            d.insert(t, Phrase::single(format!("{t}{i}")).unwrap());
        }
    }
    d
}

#[test]
fn split_partitions_random_dictionaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        let dict = random_dict(&mut rng);
        let ratio = rng.random_range(0.05..0.95);
        let seed = rng.random();
        let split = split_dictionary(&dict, ratio, seed).unwrap();
        for t in NeType::ALL {
            let (tr, te) = (split.train.entries(t), split.test.entries(t));
            assert!(tr.is_disjoint(te));
            let union: BTreeSet<_> = tr.union(te).cloned().collect();
            assert_eq!(&union, dict.entries(t));
            let n = dict.entries(t).len() as f64;
            assert!((tr.len() as f64 - ratio * n).abs() <= 1.0);
            assert!(!te.is_empty());
        }
        let again = split_dictionary(&dict, ratio, seed).unwrap();
        assert_eq!(
            again.train.entries(NeType::Org),
            split.train.entries(NeType::Org)
        );
    }
}

#[test]
fn coverage_with_planted_oov_is_exact() {
    let mut dict = NeDictionary::new("xx");
    let mut rows = Vec::new();
    for i in 0..1000 {
        let tok = format!("e{i}");
        if i % 10 < 7 {
            rows.push((tok.clone(), vec![i as f64]));
        }
        dict.insert(NeType::Org, Phrase::single(tok).unwrap());
    }
    let space = EmbeddingSpace::from_rows("xx", 1, rows.clone()).unwrap();
    let cov = coverage_report(&dict, &space)[&NeType::Org];
    assert_eq!((cov.covered, cov.total, cov.fraction), (700, 1000, 0.7));

    // growing the vocabulary never lowers coverage
    let mut previous = 0.0;
    for extra in [0usize, 50, 150, 300] {
        let mut grown = rows.clone();
        grown.extend((0..extra).map(|k| (format!("e{}", 10 * k + 7), vec![0.0])));
        let space = EmbeddingSpace::from_rows("xx", 1, grown).unwrap();
        let f = coverage_report(&dict, &space)[&NeType::Org].fraction;
        assert!((0.0..=1.0).contains(&f) && f >= previous);
        previous = f;
    }
}
