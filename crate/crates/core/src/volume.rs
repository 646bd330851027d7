//! Geometric scoring of a mapped sphere against a reference sphere.
//!
//! Overlap precision is `V_i / V_m` and recall `V_i / V_t` for the target,
//! mapped and intersection volumes. Both are estimated by Monte Carlo, with
//! an exact cap-volume formula for two balls as the reference.
//!
//! Samples are drawn in fixed-size chunks, each from its own ChaCha stream
//! keyed by the chunk index, and hits are summed as integers. Chunks can run
//! on any thread in any order without changing the counts.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, gamma::ln_gamma};

use crate::embedding::squared_distance;
use crate::error::{check_dim, Error, Result};
use crate::exec::{self, Execution};
use crate::hypersphere::{harmonic_mean, Hypersphere};

const CHUNK: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Uniform in the axis-aligned box around the union of the two balls.
    BoundingBox,
    /// Uniform inside each ball in turn; the ball volumes come from the
    /// closed form. Needed once `d` grows past about 8, where the box
    /// around a ball is almost entirely empty.
    BallUniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub sampler: Sampler,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: 1_000_000,
            seed: 42,
            sampler: Sampler::BoundingBox,
            execution: Execution::default(),
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidInput("sample count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct OverlapStdError {
    pub v_target: f64,
    pub v_mapped: f64,
    pub v_intersection: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OverlapReport {
    pub v_target: f64,
    pub v_mapped: f64,
    pub v_intersection: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub std_error: OverlapStdError,
    /// Set when a rate had no hits in its denominator and was reported as 0.
    pub degenerate: bool,
    pub samples: usize,
    pub sampler: Sampler,
}

pub const OVERLAP_TSV_HEADER: &str =
    "v_target\tv_mapped\tv_intersection\tprecision\trecall\tf1\tstderr_f1";

impl OverlapReport {
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.v_target,
            self.v_mapped,
            self.v_intersection,
            self.precision,
            self.recall,
            self.f1,
            self.std_error.f1
        )
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{OVERLAP_TSV_HEADER}")?;
        writeln!(out, "{}", self.tsv_row())?;
        out.flush()
    }
}

fn check_pair(a: &Hypersphere, b: &Hypersphere) -> Result<()> {
    check_dim(a.dim(), b.dim())?;
    for s in [a, b] {
        if s.radius() <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "{} sphere radius {} must be positive",
                s.ne_type(),
                s.radius()
            )));
        }
    }
    Ok(())
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunk_len(total: usize, chunk: usize) -> usize {
    CHUNK.min(total - chunk * CHUNK)
}

/// Sums per-chunk hit vectors in chunk order.
fn count_hits<const K: usize>(
    config: &McConfig,
    f: impl Fn(&mut ChaCha8Rng, usize) -> [u64; K] + Sync + Send,
) -> [u64; K] {
    let chunks = config.samples.div_ceil(CHUNK);
    let per = exec::map_range(config.execution, chunks, |c| {
        f(&mut chunk_rng(config.seed, c), chunk_len(config.samples, c))
    });
    per.into_iter().fold([0; K], |mut acc, h| {
        acc.iter_mut().zip(h).for_each(|(a, x)| *a += x);
        acc
    })
}

/// Uniform point in the unit ball.
fn unit_ball_point(rng: &mut ChaCha8Rng, d: usize, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
            norm2 += *x * *x;
        }
        if norm2 > 0.0 {
            let scale = rng.random::<f64>().powf(1.0 / d as f64) / norm2.sqrt();
            out.iter_mut().for_each(|x| *x *= scale);
            return;
        }
    }
}

fn binomial_se(p: f64, n: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        (p * (1.0 - p) / n).max(0.0).sqrt()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Monte Carlo overlap between a reference sphere and a mapped one.
pub fn mc_overlap(
    target: &Hypersphere,
    mapped: &Hypersphere,
    config: &McConfig,
) -> Result<OverlapReport> {
    check_pair(target, mapped)?;
    config.validate()?;
    match config.sampler {
        Sampler::BoundingBox => box_overlap(target, mapped, config),
        Sampler::BallUniform => ball_overlap(target, mapped, config),
    }
}

fn box_overlap(
    target: &Hypersphere,
    mapped: &Hypersphere,
    config: &McConfig,
) -> Result<OverlapReport> {
    let d = target.dim();
    let (ct, cm) = (target.center(), mapped.center());
    let (rt, rm) = (target.radius(), mapped.radius());
    let lo: Vec<f64> = (0..d).map(|k| (ct[k] - rt).min(cm[k] - rm)).collect();
    let hi: Vec<f64> = (0..d).map(|k| (ct[k] + rt).max(cm[k] + rm)).collect();
    let box_volume: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).product();
    let (rt2, rm2) = (rt * rt, rm * rm);

    // [target, mapped, both]
    let [t, m, b] = count_hits(config, |rng, n| {
        let mut x = vec![0.0; d];
        let mut h = [0u64; 3];
        for _ in 0..n {
            for k in 0..d {
                x[k] = rng.random_range(lo[k]..=hi[k]);
            }
            let it = squared_distance(&x, ct) <= rt2;
            let im = squared_distance(&x, cm) <= rm2;
            h[0] += it as u64;
            h[1] += im as u64;
            h[2] += (it && im) as u64;
        }
        h
    });

    let n = config.samples as f64;
    let (pt, pm, pb) = (t as f64 / n, m as f64 / n, b as f64 / n);
    let precision = ratio(b, m);
    let recall = ratio(b, t);
    // f1 = 2 |both| / (|target| + |mapped|)
    let f1 = if t + m == 0 {
        0.0
    } else {
        2.0 * b as f64 / (t + m) as f64
    };
    let po = pt + pm - 2.0 * pb;
    let f1_se = if t + m == 0 {
        0.0
    } else {
        let s = 2.0 * pb + po;
        let (du, dv) = (2.0 * po / (s * s), -2.0 * pb / (s * s));
        let var = du * du * pb * (1.0 - pb) + dv * dv * po * (1.0 - po) - 2.0 * du * dv * pb * po;
        (var.max(0.0) / n).sqrt()
    };
    Ok(OverlapReport {
        v_target: pt * box_volume,
        v_mapped: pm * box_volume,
        v_intersection: pb * box_volume,
        precision,
        recall,
        f1,
        std_error: OverlapStdError {
            v_target: box_volume * binomial_se(pt, n),
            v_mapped: box_volume * binomial_se(pm, n),
            v_intersection: box_volume * binomial_se(pb, n),
            precision: binomial_se(precision, m as f64),
            recall: binomial_se(recall, t as f64),
            f1: f1_se,
        },
        degenerate: t == 0 || m == 0,
        samples: config.samples,
        sampler: Sampler::BoundingBox,
    })
}

fn ball_overlap(
    target: &Hypersphere,
    mapped: &Hypersphere,
    config: &McConfig,
) -> Result<OverlapReport> {
    let d = target.dim();
    let (ct, cm) = (target.center(), mapped.center());
    let (rt, rm) = (target.radius(), mapped.radius());
    let (rt2, rm2) = (rt * rt, rm * rm);

    // One unit-ball sample u serves both balls, so swapping the roles of
    // the spheres swaps the two counts exactly.
    let [m_in_t, t_in_m] = count_hits(config, |rng, n| {
        let mut u = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut h = [0u64; 2];
        for _ in 0..n {
            unit_ball_point(rng, d, &mut u);
            for k in 0..d {
                x[k] = cm[k] + rm * u[k];
            }
            h[0] += (squared_distance(&x, ct) <= rt2) as u64;
            for k in 0..d {
                x[k] = ct[k] + rt * u[k];
            }
            h[1] += (squared_distance(&x, cm) <= rm2) as u64;
        }
        h
    });

    let n = config.samples as f64;
    let v_target = ball_volume(d, rt);
    let v_mapped = ball_volume(d, rm);
    let precision = m_in_t as f64 / n;
    let recall = t_in_m as f64 / n;
    let f1 = harmonic_mean(precision, recall);
    let (sp, sr) = (binomial_se(precision, n), binomial_se(recall, n));
    let f1_se = if precision + recall == 0.0 {
        0.0
    } else {
        let s2 = (precision + recall).powi(2);
        let (dp, dr) = (2.0 * recall * recall / s2, 2.0 * precision * precision / s2);
        (dp * dp * sp * sp + dr * dr * sr * sr).sqrt()
    };
    let v_intersection =
        (0.5 * (precision * v_mapped + recall * v_target)).min(v_target.min(v_mapped));
    Ok(OverlapReport {
        v_target,
        v_mapped,
        v_intersection,
        precision,
        recall,
        f1,
        std_error: OverlapStdError {
            v_target: 0.0,
            v_mapped: 0.0,
            v_intersection: 0.5 * (sp * v_mapped + sr * v_target),
            precision: sp,
            recall: sr,
            f1: f1_se,
        },
        degenerate: false,
        samples: config.samples,
        sampler: Sampler::BallUniform,
    })
}

/// Single-ball volume by uniform sampling of the ball's own bounding box,
/// with its binomial standard error.
pub fn mc_ball_volume(sphere: &Hypersphere, config: &McConfig) -> Result<(f64, f64)> {
    config.validate()?;
    let (d, r) = (sphere.dim(), sphere.radius());
    let c = sphere.center();
    let r2 = r * r;
    let [hits] = count_hits(config, |rng, n| {
        let mut x = vec![0.0; d];
        let mut h = 0u64;
        for _ in 0..n {
            for k in 0..d {
                x[k] = c[k] + rng.random_range(-r..=r);
            }
            h += (squared_distance(&x, c) <= r2) as u64;
        }
        [h]
    });
    let box_volume = (2.0 * r).powi(d as i32);
    let n = config.samples as f64;
    let p = hits as f64 / n;
    Ok((p * box_volume, box_volume * binomial_se(p, n)))
}

/// Volume of a `d`-ball of radius `r`: `pi^(d/2) r^d / Gamma(d/2 + 1)`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let d = d as f64;
    (0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0) + d * r.ln()).exp()
}

/// Volume of the part of a `d`-ball of radius `r` lying beyond a hyperplane
/// at signed distance `a` from its center.
pub fn cap_volume(d: usize, r: f64, a: f64) -> f64 {
    let whole = ball_volume(d, r);
    if a >= r {
        return 0.0;
    }
    if a <= -r {
        return whole;
    }
    let t = 1.0 - (a / r).powi(2);
    let half = 0.5 * whole * beta_reg(0.5 * (d as f64 + 1.0), 0.5, t);
    if a >= 0.0 {
        half
    } else {
        whole - half
    }
}

/// Exact volume of the intersection of two balls.
pub fn analytic_two_ball_intersection(s1: &Hypersphere, s2: &Hypersphere) -> Result<f64> {
    check_dim(s1.dim(), s2.dim())?;
    let d = s1.dim();
    let (r1, r2) = (s1.radius(), s2.radius());
    let c = squared_distance(s1.center(), s2.center()).sqrt();
    if c >= r1 + r2 {
        return Ok(0.0);
    }
    if c <= (r1 - r2).abs() {
        return Ok(ball_volume(d, r1.min(r2)));
    }
    // radical hyperplane at distance a1 from the first center
    let a1 = (c * c + r1 * r1 - r2 * r2) / (2.0 * c);
    let a2 = c - a1;
    Ok(cap_volume(d, r1, a1) + cap_volume(d, r2, a2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::NeType;
    use crate::embedding::Vector;
    use std::f64::consts::PI;

    fn ball(center: Vec<f64>, r: f64) -> Hypersphere {
        Hypersphere::new(Vector::new(center).unwrap(), r, NeType::Per).unwrap()
    }

    #[test]
    fn ball_volume_closed_forms() {
        assert!((ball_volume(2, 1.0) - PI).abs() < 1e-12);
        assert!((ball_volume(3, 2.0) - 4.0 / 3.0 * PI * 8.0).abs() < 1e-10);
        assert!((ball_volume(4, 1.0) - PI * PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn lens_volumes() {
        let a = ball(vec![0.0, 0.0], 1.0);
        let b = ball(vec![1.0, 0.0], 1.0);
        let lens = 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0;
        assert!((analytic_two_ball_intersection(&a, &b).unwrap() - lens).abs() < 1e-12);
        let a3 = ball(vec![0.0; 3], 1.0);
        let b3 = ball(vec![1.0, 0.0, 0.0], 1.0);
        assert!(
            (analytic_two_ball_intersection(&a3, &b3).unwrap() - 5.0 * PI / 12.0).abs() < 1e-12
        );
    }

    #[test]
    fn containment_and_disjointness() {
        let big = ball(vec![0.0; 4], 2.0);
        let small = ball(vec![0.3, 0.0, 0.0, 0.0], 1.0);
        assert_eq!(
            analytic_two_ball_intersection(&big, &small).unwrap(),
            ball_volume(4, 1.0)
        );
        let far = ball(vec![5.0, 0.0, 0.0, 0.0], 1.0);
        assert_eq!(analytic_two_ball_intersection(&big, &far).unwrap(), 0.0);
    }

    #[test]
    fn identical_spheres_overlap_fully() {
        let a = ball(vec![0.5, -1.0, 2.0], 1.5);
        for sampler in [Sampler::BoundingBox, Sampler::BallUniform] {
            let cfg = McConfig {
                samples: 20_000,
                sampler,
                ..McConfig::default()
            };
            let r = mc_overlap(&a, &a, &cfg).unwrap();
            assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn disjoint_spheres_score_zero() {
        let a = ball(vec![0.0, 0.0], 1.0);
        let b = ball(vec![3.0, 0.0], 1.0);
        for sampler in [Sampler::BoundingBox, Sampler::BallUniform] {
            let cfg = McConfig {
                samples: 20_000,
                sampler,
                ..McConfig::default()
            };
            assert_eq!(mc_overlap(&a, &b, &cfg).unwrap().f1, 0.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let a = ball(vec![0.0, 0.0], 1.0);
        let z = ball(vec![0.0, 0.0], 0.0);
        let d3 = ball(vec![0.0; 3], 1.0);
        let cfg = McConfig::default();
        assert!(mc_overlap(&a, &z, &cfg).is_err());
        assert!(mc_overlap(&a, &d3, &cfg).is_err());
        assert!(mc_overlap(&a, &a, &McConfig { samples: 0, ..cfg }).is_err());
    }

    #[test]
    fn tsv_layout() {
        let a = ball(vec![0.0], 1.0);
        let r = mc_overlap(
            &a,
            &a,
            &McConfig {
                samples: 100,
                ..McConfig::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], OVERLAP_TSV_HEADER);
        assert_eq!(lines[1].split('\t').count(), 7);
    }
}
