//! Hypersphere models of named-entity distributions in word-embedding space.
//!
//! Every entity type (PER, LOC, ORG) is modelled as a ball `E(x, O) <= r` in a
//! raw Euclidean embedding space. The crate fits those balls against entity
//! dictionaries, carries them across languages with seed-pair affine mappings
//! or an earth-mover alignment, scores mappings by Monte Carlo volume overlap,
//! and exports z-scored distance features for downstream taggers.
//!
//! Data-parallel inner loops (vocabulary scans, Monte Carlo chunks, cost
//! matrices, Sinkhorn scalings) run on rayon when the `parallel` feature is
//! enabled; see [`Execution`]. Results are identical in both modes.

pub mod dictionary;
pub mod embedding;
mod error;
pub mod exec;
pub mod features;
pub mod hypersphere;
pub mod mapping;
pub mod synth;
pub mod volume;

pub use dictionary::{
    coverage_report, load_dictionary, split_dictionary, write_dictionary, Coverage, DatasetSplit,
    NeDictionary, NeType, Phrase,
};
pub use embedding::{
    euclidean_distance, load_embeddings, nearest_neighbors, phrase_vector, project_2d,
    EmbeddingSpace, Neighbor, Vector,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use features::{compute_features, export_features, FeatureRow, FeatureSet};
pub use hypersphere::{
    evaluate_hypersphere, fit_hypersphere, EvalReport, FitConfig, FitOutcome, Hypersphere, QGrid,
    RadiusCandidates,
};
pub use mapping::{
    alternating_emd_fit, candidate_entities, learn_linear_map, map_center, map_hypersphere,
    refine_affine, solve_transport, transport_cost, AffineRefinement, DiscreteDistribution,
    EmdConfig, EmdInit, LinearMap, SeedPairs, TransportConfig, TransportMode, TransportPlan,
};
pub use volume::{analytic_two_ball_intersection, mc_overlap, McConfig, OverlapReport, Sampler};
