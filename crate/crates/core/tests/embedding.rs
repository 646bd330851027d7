use std::collections::{BTreeMap, HashSet};

use nesphere::embedding::{load_embeddings_with_report, nearest_neighbors_with};
use nesphere::synth::{generate_space, CenterSampler, ClusterSpec, SynthSpec};
use nesphere::{
    euclidean_distance, load_embeddings, nearest_neighbors, phrase_vector, project_2d,
    EmbeddingSpace, Execution, NeType, Phrase,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_space(n: usize, d: usize, seed: u64) -> EmbeddingSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<(String, Vec<f64>)> = (0..n)
        .map(|i| {
            (
                format!("w{i}"),
                (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    EmbeddingSpace::from_rows("xx", d, rows).unwrap()
}

fn naive_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let t = a[i] - b[i];
        s += t * t;
    }
    s.sqrt()
}

#[test]
fn fifty_thousand_word_file_round_trips_bit_exactly() {
    let spec = SynthSpec {
        vocab_size: Some(50_000),
        ..SynthSpec::benchmark(3)
    };
    let space = generate_space(&spec).unwrap().space;
    assert_eq!(space.len(), 50_000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.txt");
    space.save(&path).unwrap();
    let (back, report) = load_embeddings_with_report(&path, Some(16)).unwrap();
    assert_eq!(back.len(), 50_000);
    assert_eq!(report.duplicates, 0);
    for (tok, v) in space.iter() {
        let w = back.get(tok).unwrap();
        assert!(
            v.iter().zip(w).all(|(a, b)| a.to_bits() == b.to_bits()),
            "{tok}"
        );
    }
}

#[test]
fn distance_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let a: Vec<f64> = (0..16).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..16).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (got, want) = (euclidean_distance(&a, &b).unwrap(), naive_distance(&a, &b));
        assert!((got - want).abs() <= 1e-12 * want);
    }
    assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    assert!(euclidean_distance(&[0.0], &[1.0, 2.0]).is_err());
}

#[test]
fn neighbors_equal_full_sort_prefix() {
    let space = random_space(1000, 8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut all: Vec<(f64, &str)> = space
            .iter()
            .map(|(t, v)| (naive_distance(v, &q), t))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let got = nearest_neighbors(&space, &q, 5, &HashSet::new()).unwrap();
        let want: Vec<&str> = all.iter().take(5).map(|x| x.1).collect();
        assert_eq!(
            got.iter().map(|n| n.token.as_str()).collect::<Vec<_>>(),
            want
        );
    }
}

#[test]
fn neighbor_ties_break_by_token_and_modes_agree() {
    let rows = vec![
        ("zeta", vec![1.0, 0.0]),
        ("alpha", vec![-1.0, 0.0]),
        ("mid", vec![0.0, 1.0]),
        ("far", vec![5.0, 5.0]),
    ];
    let space = EmbeddingSpace::from_rows("xx", 2, rows).unwrap();
    let got = nearest_neighbors(&space, &[0.0, 0.0], 3, &HashSet::new()).unwrap();
    let names: Vec<&str> = got.iter().map(|n| n.token.as_str()).collect();
    assert_eq!(names, ["alpha", "mid", "zeta"]);

    let big = random_space(3000, 5, 9);
    let q = [0.1, -0.2, 0.3, 0.0, 0.5];
    let ex: HashSet<String> = ["w1".to_owned(), "w2".to_owned()].into();
    assert_eq!(
        nearest_neighbors_with(&big, &q, 40, &ex, Execution::Sequential).unwrap(),
        nearest_neighbors_with(&big, &q, 40, &ex, Execution::Parallel).unwrap()
    );
}

#[test]
fn phrase_vector_averages_the_present_subset() {
    let space =
        EmbeddingSpace::from_rows("xx", 2, vec![("a", vec![2.0, 4.0]), ("b", vec![0.0, 1.0])])
            .unwrap();
    let v = phrase_vector(&space, &Phrase::parse("a q").unwrap()).unwrap();
    assert_eq!(v.as_slice(), &[2.0, 4.0]);
    let v = phrase_vector(&space, &Phrase::parse("a b q").unwrap()).unwrap();
    assert_eq!(v.as_slice(), &[1.0, 2.5]);
    assert!(phrase_vector(&space, &Phrase::parse("q r").unwrap()).is_none());
}

#[test]
fn file_format_errors_carry_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.txt");
    std::fs::write(&path, "2 3\na 1 0 0\nb 0 1\n").unwrap();
    let msg = load_embeddings(&path, None).unwrap_err().to_string();
    assert!(msg.contains(":3:"), "{msg}");
    std::fs::write(&path, "2 3\na 1 0 0\nb 0 1 0\n").unwrap();
    assert!(load_embeddings(&path, Some(4)).is_err());
    assert_eq!(load_embeddings(&path, Some(3)).unwrap().len(), 2);
}

/// Mean silhouette with a plain distance loop.
fn silhouette(points: &[(f64, f64)], labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..points.len() {
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
            sum[labels[j]] += (dx * dx + dy * dy).sqrt();
            count[labels[j]] += 1;
        }
        let a = sum[labels[i]] / count[labels[i]] as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i])
            .map(|c| sum[c] / count[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / points.len() as f64
}

#[test]
fn projection_separates_planted_clusters() {
    let dim = 10;
    let at = |k: usize| {
        let mut c = vec![0.0; dim];
        c[k] = 10.0;
        CenterSampler::Fixed(c)
    };
    let spec = SynthSpec {
        dim,
        vocab_size: None,
        clusters: BTreeMap::from([
            (
                NeType::Per,
                ClusterSpec {
                    center: at(0),
                    spread: 1.0,
                    members: 100,
                },
            ),
            (
                NeType::Loc,
                ClusterSpec {
                    center: at(1),
                    spread: 1.0,
                    members: 100,
                },
            ),
            (
                NeType::Org,
                ClusterSpec {
                    center: at(2),
                    spread: 1.0,
                    members: 100,
                },
            ),
        ]),
        background: 0,
        background_half_width: 1.0,
        transform: None,
        noise_sigma: 0.0,
        seed: 4,
        language_tag: "xx".into(),
    };
    let synth = generate_space(&spec).unwrap();
    let tokens: Vec<&str> = synth.space.tokens().iter().map(String::as_str).collect();
    let points = project_2d(&synth.space, &tokens).unwrap();
    let label = |t: &str| {
        NeType::ALL
            .iter()
            .position(|n| t.starts_with(n.as_str()))
            .unwrap()
    };
    let labels: Vec<usize> = points.iter().map(|p| label(&p.token)).collect();
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    let s = silhouette(&xy, &labels);
    assert!(s > 0.5, "silhouette {s}");
}
