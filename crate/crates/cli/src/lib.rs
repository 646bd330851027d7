//! Command-line pipelines over the `nesphere` library.
//!
//! Every subcommand writes a `<out>.manifest.json` next to its output with
//! the resolved parameters and the SHA-256 of each input file. Report files
//! start with a `#` line carrying the manifest digest.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
pub mod manifest;
pub mod scan;

pub use manifest::RunManifest;
pub use scan::{scan_dimensions, DimensionScan, ScanRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "nesphere",
    version,
    about = "Named-entity hyperspheres in embedding space"
)]
pub struct Cli {
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one entity type's sphere from embeddings and a dictionary.
    Fit(FitArgs),
    /// Score a sphere against a dictionary.
    Eval(EvalArgs),
    /// Carry a sphere into a target space through seed pairs.
    Map(MapArgs),
    /// Align two spaces by alternating optimal transport and least squares.
    EmdFit(EmdFitArgs),
    /// Monte Carlo volume overlap of a target and a mapped sphere.
    Overlap(OverlapArgs),
    /// Z-scored PER/LOC/ORG distance features for every token.
    Features(FeaturesArgs),
    /// Nearest tokens to a token or a sphere center.
    Neighbors(NeighborsArgs),
    /// Candidate entities around a (mapped) sphere center.
    Candidates(CandidatesArgs),
    /// Write a synthetic benchmark: spaces, dictionaries, truth spheres, seeds.
    Synth(SynthArgs),
    /// Fit across embedding files of different dimension and pick the best per type.
    ScanDims(ScanDimsArgs),
    /// 2-D PCA scatter of selected tokens.
    Project2d(Project2dArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TypeArg {
    #[value(name = "PER")]
    Per,
    #[value(name = "LOC")]
    Loc,
    #[value(name = "ORG")]
    Org,
}

impl From<TypeArg> for nesphere::NeType {
    fn from(t: TypeArg) -> Self {
        match t {
            TypeArg::Per => nesphere::NeType::Per,
            TypeArg::Loc => nesphere::NeType::Loc,
            TypeArg::Org => nesphere::NeType::Org,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exact,
    Entropic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerArg {
    BoundingBox,
    BallUniform,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long = "type", value_enum)]
    pub ne_type: TypeArg,
    /// Sphere file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluation report; defaults to `<out>.eval.tsv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Fraction of the dictionary used to place the center.
    #[arg(long, default_value_t = 0.9)]
    pub split: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub max_iterations: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub sphere: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    /// Entity type of the dictionary; defaults to the sphere's type.
    #[arg(long = "type", value_enum)]
    pub ne_type: Option<TypeArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MapArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub target_embeddings: PathBuf,
    #[arg(long)]
    pub seeds_file: PathBuf,
    #[arg(long)]
    pub sphere: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub ridge: f64,
    /// Mapped sphere file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the learned linear map here.
    #[arg(long)]
    pub map_out: Option<PathBuf>,
    /// Refinement report; defaults to `<out>.refine.tsv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EmdFitArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub target_embeddings: PathBuf,
    /// Linear map file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Use only the first n rows of each file.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon: f64,
    /// Entropic marginal tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub ridge: f64,
    #[arg(long, default_value_t = 10)]
    pub outer_iter: usize,
    /// Initialize by orthogonal Procrustes on these pairs instead of the identity.
    #[arg(long)]
    pub seeds_file: Option<PathBuf>,
    /// Cost trace; defaults to `<out>.trace.tsv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OverlapArgs {
    /// Target sphere, then mapped sphere.
    #[arg(long, num_args = 1, required = true)]
    pub sphere: Vec<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SamplerArg::BoundingBox)]
    pub sampler: SamplerArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// One sphere file per entity type.
    #[arg(long, num_args = 1, required = true)]
    pub sphere: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct NeighborsArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Query token; it is excluded from the results.
    #[arg(long, conflicts_with = "sphere", required_unless_present = "sphere")]
    pub token: Option<String>,
    /// Query the sphere's center.
    #[arg(long)]
    pub sphere: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CandidatesArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub sphere: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// JSON spec; the built-in benchmark when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Overrides the spec noise level.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Seed pairs written to `seeds.tsv`.
    #[arg(long, default_value_t = 24)]
    pub n: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ScanDimsArgs {
    /// Embedding files; the dimension is read from each header.
    #[arg(long, num_args = 1, required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Dictionary files, paired in order with `--type`.
    #[arg(long, num_args = 1, required = true)]
    pub dict: Vec<PathBuf>,
    #[arg(long = "type", value_enum, num_args = 1, required = true)]
    pub ne_type: Vec<TypeArg>,
    #[arg(long, default_value_t = 0.9)]
    pub split: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct Project2dArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub token: Vec<String>,
    /// File with one token per line.
    #[arg(long)]
    pub tokens_file: Option<PathBuf>,
    /// Project the single-token entries of a dictionary.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}
