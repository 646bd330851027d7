use std::f64::consts::PI;

use nesphere::volume::{ball_volume, cap_volume};
use nesphere::{
    analytic_two_ball_intersection, mc_overlap, Execution, Hypersphere, McConfig, NeType, Sampler,
    Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ball(c: &[f64], r: f64) -> Hypersphere {
    Hypersphere::new(Vector::new(c.to_vec()).unwrap(), r, NeType::Loc).unwrap()
}

fn cfg(samples: usize, sampler: Sampler) -> McConfig {
    McConfig {
        samples,
        seed: 3,
        sampler,
        ..McConfig::default()
    }
}

#[test]
fn swapping_spheres_swaps_precision_and_recall() {
    let (a, b) = (ball(&[0.0, 0.0, 0.0], 1.0), ball(&[0.8, 0.3, 0.0], 1.4));
    let c = cfg(200_000, Sampler::BoundingBox);
    let (ab, ba) = (
        mc_overlap(&a, &b, &c).unwrap(),
        mc_overlap(&b, &a, &c).unwrap(),
    );
    assert_eq!(ab.precision, ba.recall);
    assert_eq!(ab.recall, ba.precision);
    assert_eq!(ab.f1, ba.f1);

    let c = cfg(200_000, Sampler::BallUniform);
    let (ab, ba) = (
        mc_overlap(&a, &b, &c).unwrap(),
        mc_overlap(&b, &a, &c).unwrap(),
    );
    let tol = 4.0 * (ab.std_error.precision + ab.std_error.recall);
    assert!((ab.precision - ba.recall).abs() < tol);
    assert!((ab.recall - ba.precision).abs() < tol);
}

#[test]
fn identical_and_disjoint_spheres() {
    for sampler in [Sampler::BoundingBox, Sampler::BallUniform] {
        let a = ball(&[1.0, 2.0, 3.0, 4.0], 2.0);
        let same = mc_overlap(&a, &a, &cfg(50_000, sampler)).unwrap();
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));
        let far = ball(&[1.0, 2.0, 3.0, 10.0], 2.0);
        let none = mc_overlap(&a, &far, &cfg(50_000, sampler)).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        assert_eq!(none.v_intersection, 0.0);
    }
}

#[test]
fn planar_lens_within_three_standard_errors() {
    let (a, b) = (ball(&[0.0, 0.0], 1.0), ball(&[1.0, 0.0], 1.0));
    let lens = 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0;
    for (sampler, seed) in [(Sampler::BoundingBox, 1), (Sampler::BallUniform, 2)] {
        let rep = mc_overlap(
            &a,
            &b,
            &McConfig {
                seed,
                ..cfg(400_000, sampler)
            },
        )
        .unwrap();
        let z = (rep.v_intersection - lens) / rep.std_error.v_intersection;
        assert!(z.abs() <= 3.0, "{sampler:?}: z {z}");
    }
}

#[test]
fn analytic_intersection_special_cases() {
    let (a, b) = (ball(&[0.0, 0.0, 0.0], 1.0), ball(&[1.0, 0.0, 0.0], 1.0));
    let v = analytic_two_ball_intersection(&a, &b).unwrap();
    assert!((v - 5.0 * PI / 12.0).abs() < 1e-12, "{v}");

    let (inner, outer) = (ball(&[0.1, 0.0, 0.0], 0.5), ball(&[0.0, 0.0, 0.0], 2.0));
    let v = analytic_two_ball_intersection(&inner, &outer).unwrap();
    assert!((v - 4.0 / 3.0 * PI * 0.125).abs() < 1e-12);
    assert_eq!(
        analytic_two_ball_intersection(&a, &ball(&[3.0, 0.0, 0.0], 1.0)).unwrap(),
        0.0
    );

    assert!((ball_volume(3, 2.0) - 32.0 * PI / 3.0).abs() < 1e-10);
    assert!((cap_volume(3, 1.0, 0.0) - 2.0 * PI / 3.0).abs() < 1e-12);
}

#[test]
fn intersection_never_exceeds_the_smaller_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let d = rng.random_range(1..10);
        let c1: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c2: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (r1, r2) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        let v = analytic_two_ball_intersection(&ball(&c1, r1), &ball(&c2, r2)).unwrap();
        let cap = ball_volume(d, r1).min(ball_volume(d, r2));
        assert!(v >= 0.0 && v <= cap * (1.0 + 1e-12), "d {d}: {v} > {cap}");
    }
}

#[test]
fn overlap_is_deterministic_and_mode_independent() {
    let (a, b) = (
        ball(&[0.0; 6], 1.0),
        ball(&[0.5, 0.0, 0.2, 0.0, 0.0, 0.1], 0.9),
    );
    for sampler in [Sampler::BoundingBox, Sampler::BallUniform] {
        let run = |execution| {
            mc_overlap(
                &a,
                &b,
                &McConfig {
                    execution,
                    ..cfg(300_000, sampler)
                },
            )
            .unwrap()
        };
        let seq = run(Execution::Sequential);
        assert_eq!(seq, run(Execution::Parallel));
        assert_eq!(seq, run(Execution::Sequential));
        let other = mc_overlap(
            &a,
            &b,
            &McConfig {
                seed: 4,
                ..cfg(300_000, sampler)
            },
        )
        .unwrap();
        assert_ne!(seq.v_intersection, other.v_intersection);
    }
}
