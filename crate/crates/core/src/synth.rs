//! Seeded synthetic spaces with planted entity clusters and known
//! cross-space similarity transforms.
//!
//! Every random draw comes from a ChaCha8 stream derived from the spec seed
//! and a fixed purpose index, so adding a cluster does not perturb the
//! background and vice versa.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dictionary::{NeDictionary, NeType, Phrase};
use crate::embedding::{distance, EmbeddingSpace, Vector};
use crate::error::{Error, Result};
use crate::hypersphere::{nearest_rank, Hypersphere};
use crate::mapping::{LinearMap, SeedPairs};

/// Percentile of member distances used as the planted radius.
pub const TRUTH_PERCENTILE: f64 = 0.95;

const STREAM_CENTERS: u64 = 0;
const STREAM_CLUSTER: u64 = 1;
const STREAM_BACKGROUND: u64 = 8;
const STREAM_FILLER: u64 = 9;
const STREAM_ORTHOGONAL: u64 = 16;
const STREAM_NOISE: u64 = 17;
const STREAM_PERMUTE: u64 = 18;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSampler {
    Fixed(Vec<f64>),
    /// Uniform in `[-half_width, half_width]^d`.
    Uniform {
        half_width: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: CenterSampler,
    /// Per-coordinate standard deviation of the members.
    pub spread: f64,
    pub members: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orthogonal {
    Identity,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub scale: f64,
    pub orthogonal: Orthogonal,
    /// Shuffle the row order of the target file.
    pub permute: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    /// Total tokens; anything beyond clusters and background is filled with
    /// extra uniform `w_<i>` tokens. `None` means exactly
    /// clusters + background.
    #[serde(default)]
    pub vocab_size: Option<usize>,
    pub clusters: BTreeMap<NeType, ClusterSpec>,
    pub background: usize,
    /// Background points are uniform in `[-h, h]^d`.
    pub background_half_width: f64,
    #[serde(default)]
    pub transform: Option<TransformSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default = "default_tag")]
    pub language_tag: String,
}

fn default_tag() -> String {
    "synth".into()
}

impl SynthSpec {
    /// The planted-recovery benchmark: `d = 16`, a PER cluster of 2000 at
    /// the origin inside 20000 uniform background points, and LOC/ORG
    /// clusters well clear of both. The cube half-width puts the
    /// F1-optimal radius near the 95th-percentile member distance.
    pub fn benchmark(seed: u64) -> Self {
        let dim = 16;
        let axis = |k: usize, v: f64| {
            let mut c = vec![0.0; dim];
            c[k] = v;
            CenterSampler::Fixed(c)
        };
        let clusters = BTreeMap::from([
            (
                NeType::Per,
                ClusterSpec {
                    center: CenterSampler::Fixed(vec![0.0; dim]),
                    spread: 1.0,
                    members: 2000,
                },
            ),
            (
                NeType::Loc,
                ClusterSpec {
                    center: axis(0, 16.0),
                    spread: 1.0,
                    members: 600,
                },
            ),
            (
                NeType::Org,
                ClusterSpec {
                    center: axis(1, -16.0),
                    spread: 1.0,
                    members: 600,
                },
            ),
        ]);
        SynthSpec {
            dim,
            vocab_size: None,
            clusters,
            background: 20_000,
            background_half_width: 3.4,
            transform: Some(TransformSpec {
                scale: 1.7,
                orthogonal: Orthogonal::Random,
                permute: false,
            }),
            noise_sigma: 0.0,
            seed,
            language_tag: default_tag(),
        }
    }

    pub fn member_count(&self) -> usize {
        self.clusters.values().map(|c| c.members).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        for (t, c) in &self.clusters {
            if !(c.spread >= 0.0 && c.spread.is_finite()) {
                return bad(format!("{t} spread {} must be nonnegative", c.spread));
            }
            if c.members == 0 {
                return bad(format!("{t} cluster has no members"));
            }
            match &c.center {
                CenterSampler::Fixed(v) if v.len() != self.dim => {
                    return bad(format!(
                        "{t} center has {} components, dim is {}",
                        v.len(),
                        self.dim
                    ));
                }
                CenterSampler::Fixed(v) if v.iter().any(|x| !x.is_finite()) => {
                    return bad(format!("{t} center is not finite"));
                }
                CenterSampler::Uniform { half_width }
                    if !(*half_width >= 0.0 && half_width.is_finite()) =>
                {
                    return bad(format!(
                        "{t} center half-width {half_width} must be nonnegative"
                    ));
                }
                _ => {}
            }
        }
        if !(self.background_half_width > 0.0 && self.background_half_width.is_finite()) {
            return bad("background half-width must be positive".into());
        }
        let used = self.member_count() + self.background;
        if used == 0 {
            return bad("spec produces no tokens".into());
        }
        if let Some(v) = self.vocab_size {
            if used > v {
                return bad(format!(
                    "{used} members and background exceed vocab_size {v}"
                ));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma {} must be nonnegative",
                self.noise_sigma
            ));
        }
        if let Some(t) = &self.transform {
            if !(t.scale > 0.0 && t.scale.is_finite()) {
                return bad(format!("transform scale {} must be positive", t.scale));
            }
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn type_index(t: NeType) -> u64 {
    NeType::ALL.iter().position(|x| *x == t).unwrap() as u64
}

#[derive(Clone, Debug)]
pub struct SyntheticSpace {
    pub space: EmbeddingSpace,
    /// Cluster members as single-token entries.
    pub dictionary: NeDictionary,
    /// Planted center with the 95th-percentile member distance as radius.
    pub truth: BTreeMap<NeType, Hypersphere>,
}

pub fn generate_space(spec: &SynthSpec) -> Result<SyntheticSpace> {
    spec.validate()?;
    let d = spec.dim;
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut dictionary = NeDictionary::new(spec.language_tag.clone());
    let mut truth = BTreeMap::new();

    let mut center_rng = stream(spec.seed, STREAM_CENTERS);
    for (&t, c) in &spec.clusters {
        let center = match &c.center {
            CenterSampler::Fixed(v) => v.clone(),
            CenterSampler::Uniform { half_width } => {
                let h = *half_width;
                (0..d).map(|_| center_rng.random_range(-h..=h)).collect()
            }
        };
        let mut rng = stream(spec.seed, STREAM_CLUSTER + type_index(t));
        let mut dists = Vec::with_capacity(c.members);
        for i in 0..c.members {
            let x: Vec<f64> = center
                .iter()
                .map(|m| m + c.spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            dists.push(distance(&x, &center));
            let token = format!("{t}_{i}");
            dictionary.insert(t, Phrase::single(token.clone())?);
            rows.push((token, x));
        }
        dists.sort_by(f64::total_cmp);
        let radius = nearest_rank(&dists, TRUTH_PERCENTILE);
        truth.insert(t, Hypersphere::new(Vector::new(center)?, radius, t)?);
    }

    let h = spec.background_half_width;
    let mut rng = stream(spec.seed, STREAM_BACKGROUND);
    for i in 0..spec.background {
        rows.push((
            format!("bg_{i}"),
            (0..d).map(|_| rng.random_range(-h..=h)).collect(),
        ));
    }
    let filler = spec
        .vocab_size
        .map_or(0, |v| v - spec.member_count() - spec.background);
    let mut rng = stream(spec.seed, STREAM_FILLER);
    for i in 0..filler {
        rows.push((
            format!("w_{i}"),
            (0..d).map(|_| rng.random_range(-h..=h)).collect(),
        ));
    }

    let space = EmbeddingSpace::from_rows(spec.language_tag.clone(), d, rows)?;
    Ok(SyntheticSpace {
        space,
        dictionary,
        truth,
    })
}

/// Orthogonal `d x d` matrix from the QR factorization of a Gaussian matrix,
/// with column signs fixed so that `R` has a positive diagonal.
pub fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[derive(Clone, Debug)]
pub struct TargetSpace {
    pub space: EmbeddingSpace,
    /// Every `(tok, tok_t)` pair, in source row order.
    pub seeds: SeedPairs,
    /// `z = x W` before noise, `W = scale * Q`.
    pub map: LinearMap,
    pub scale: f64,
}

impl TargetSpace {
    /// Image of a source sphere under the planted similarity.
    pub fn transform_sphere(&self, sphere: &Hypersphere) -> Result<Hypersphere> {
        Hypersphere::new(
            self.map.apply(sphere.center())?,
            self.scale * sphere.radius(),
            sphere.ne_type(),
        )
    }
}

/// `z = s x Q + noise` row by row, tokens suffixed `_t`.
pub fn derive_target_space(
    space: &EmbeddingSpace,
    transform: &TransformSpec,
    noise_sigma: f64,
    seed: u64,
) -> Result<TargetSpace> {
    if !(transform.scale > 0.0 && transform.scale.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "transform scale {} must be positive",
            transform.scale
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise_sigma {noise_sigma} must be nonnegative"
        )));
    }
    let d = space.dim();
    let q = match transform.orthogonal {
        Orthogonal::Identity => DMatrix::identity(d, d),
        Orthogonal::Random => random_orthogonal(d, &mut stream(seed, STREAM_ORTHOGONAL)),
    };
    let map = LinearMap::new(q * transform.scale)?;
    let mut noise = stream(seed, STREAM_NOISE);
    let mut rows: Vec<(String, Vec<f64>)> = space
        .iter()
        .map(|(tok, x)| {
            let mut z = map.apply_unchecked(x);
            if noise_sigma > 0.0 {
                z.iter_mut()
                    .for_each(|v| *v += noise_sigma * noise.sample::<f64, _>(StandardNormal));
            }
            (format!("{tok}_t"), z)
        })
        .collect();
    let seeds = SeedPairs::new(
        rows.iter()
            .zip(space.tokens())
            .map(|((t, _), s)| (s.clone(), t.clone()))
            .collect(),
    )?;
    if transform.permute {
        rows.shuffle(&mut stream(seed, STREAM_PERMUTE));
    }
    let target = EmbeddingSpace::from_rows(format!("{}_t", space.language_tag()), d, rows)?;
    Ok(TargetSpace {
        space: target,
        seeds,
        map,
        scale: transform.scale,
    })
}
