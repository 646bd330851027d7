use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nesphere::embedding::write_projection;
use nesphere::features::compute_features_with;
use nesphere::hypersphere::evaluate_hypersphere_with;
use nesphere::mapping::{map_hypersphere, write_candidates};
use nesphere::synth::{derive_target_space, generate_space, SynthSpec};
use nesphere::volume::OVERLAP_TSV_HEADER;
use nesphere::{
    alternating_emd_fit, candidate_entities, embedding::nearest_neighbors_with, export_features,
    fit_hypersphere, load_dictionary, load_embeddings, mc_overlap, split_dictionary,
    write_dictionary, DiscreteDistribution, EmbeddingSpace, EmdConfig, EmdInit, Error, EvalReport,
    Execution, FitConfig, Hypersphere, McConfig, NeDictionary, NeType, Sampler, SeedPairs,
    TransportConfig, TransportMode,
};

use crate::manifest::RunManifest;
use crate::scan::scan_dimensions;
use crate::{Cli, Command, ModeArg, SamplerArg, EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE};

#[derive(Debug)]
pub(crate) enum CliError {
    /// Flag combinations clap cannot express.
    Usage(String),
    Core(Error),
}

impl CliError {
    pub(crate) fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `<path><suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a report: the manifest header line, then `body`.
fn write_report(
    path: &Path,
    manifest: &RunManifest,
    body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>,
) -> Result<(), Error> {
    let mut buf = Vec::new();
    writeln!(buf, "{}", manifest.header_line())
        .and_then(|_| body(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    write_file(path, &buf)
}

fn load_space(path: &Path, manifest: &mut RunManifest) -> Result<EmbeddingSpace, Error> {
    manifest.add_input(path)?;
    load_embeddings(path, None)
}

fn load_sphere(path: &Path, manifest: &mut RunManifest) -> Result<Hypersphere, Error> {
    manifest.add_input(path)?;
    Hypersphere::load(path)
}

pub(crate) fn dispatch(cli: Cli) -> CliResult {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Fit(a) => fit(a, exec),
        Command::Eval(a) => eval(a, exec),
        Command::Map(a) => map(a),
        Command::EmdFit(a) => emd_fit(a, exec),
        Command::Overlap(a) => overlap(a, exec),
        Command::Features(a) => features(a, exec),
        Command::Neighbors(a) => neighbors(a, exec),
        Command::Candidates(a) => candidates(a),
        Command::Synth(a) => synth(a),
        Command::ScanDims(a) => scan_dims(a, exec),
        Command::Project2d(a) => project2d(a),
    }
}

fn fit(a: crate::FitArgs, exec: Execution) -> CliResult {
    let mut m = RunManifest::new("fit", &a, Some(a.seed));
    let space = load_space(&a.embeddings, &mut m)?;
    m.add_input(&a.dict)?;
    let t: NeType = a.ne_type.into();
    let dict = load_dictionary(&a.dict, t)?;
    let split = split_dictionary(&dict, a.split, a.seed)?;
    let config = FitConfig {
        max_iterations: a.max_iterations,
        execution: exec,
        ..FitConfig::default()
    };
    let fit = fit_hypersphere(&space, split.train.entries(t), dict.entries(t), &config, t)?;
    fit.sphere.save(&a.out)?;
    let report = a
        .report
        .clone()
        .unwrap_or_else(|| sibling(&a.out, ".eval.tsv"));
    write_report(&report, &m, |w| {
        writeln!(w, "{}", EvalReport::TSV_HEADER)?;
        writeln!(w, "{}", fit.report.tsv_row(t))
    })?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}

fn eval(a: crate::EvalArgs, exec: Execution) -> CliResult {
    let mut m = RunManifest::new("eval", &a, None);
    let sphere = load_sphere(&a.sphere, &mut m)?;
    let space = load_space(&a.embeddings, &mut m)?;
    m.add_input(&a.dict)?;
    let t = a.ne_type.map_or(sphere.ne_type(), NeType::from);
    let dict = load_dictionary(&a.dict, t)?;
    let report = evaluate_hypersphere_with(&sphere, &space, dict.entries(t), exec)?;
    write_report(&a.out, &m, |w| {
        writeln!(w, "{}", EvalReport::TSV_HEADER)?;
        writeln!(w, "{}", report.tsv_row(t))
    })?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}

fn map(a: crate::MapArgs) -> CliResult {
    let mut m = RunManifest::new("map", &a, None);
    let source = load_space(&a.embeddings, &mut m)?;
    let target = load_space(&a.target_embeddings, &mut m)?;
    m.add_input(&a.seeds_file)?;
    let seeds = SeedPairs::load(&a.seeds_file)?;
    let sphere = load_sphere(&a.sphere, &mut m)?;
    let mapped = map_hypersphere(&sphere, &source, &target, &seeds, a.ridge)?;
    mapped.sphere.save(&a.out)?;
    if let Some(p) = &a.map_out {
        mapped.linear.map.save(p)?;
    }
    let r = &mapped.refinement;
    let report = a
        .report
        .clone()
        .unwrap_or_else(|| sibling(&a.out, ".refine.tsv"));
    write_report(&report, &m, |w| {
        writeln!(
            w,
            "ratio\tmapped_radius\tresidual\tseeds_used\tmethod\tlinear_residual\tresolved_pairs"
        )?;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{:?}\t{}\t{}",
            r.ratio,
            r.mapped_radius,
            r.residual,
            r.seeds_used,
            r.method,
            mapped.linear.residual,
            mapped.linear.resolved_pairs
        )
    })?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}

fn emd_fit(a: crate::EmdFitArgs, exec: Execution) -> CliResult {
    let mut m = RunManifest::new("emd-fit", &a, None);
    let source = load_space(&a.embeddings, &mut m)?;
    let target = load_space(&a.target_embeddings, &mut m)?;
    let src = DiscreteDistribution::from_space(&source, Some(a.n))?;
    let tgt = DiscreteDistribution::from_space(&target, Some(a.n))?;
    let init = match &a.seeds_file {
        None => EmdInit::Identity,
        Some(p) => {
            m.add_input(p)?;
            let seeds = SeedPairs::load(p)?;
            let index = |space: &EmbeddingSpace, tok: &str, n: usize| {
                space.index_of(tok).filter(|&i| i < n)
            };
            let pairs: Vec<(usize, usize)> = seeds
                .pairs()
                .iter()
                .filter_map(|(s, t)| {
                    Some((index(&source, s, src.len())?, index(&target, t, tgt.len())?))
                })
                .collect();
            if pairs.is_empty() {
                return Err(Error::Insufficient(format!(
                    "no seed pair falls within the first {} rows of both spaces",
                    a.n
                ))
                .into());
            }
            EmdInit::ProcrustesFromSeeds(pairs)
        }
    };
    let config = EmdConfig {
        outer_iter: a.outer_iter,
        transport: TransportConfig {
            mode: match a.mode {
                ModeArg::Exact => TransportMode::Exact,
                ModeArg::Entropic => TransportMode::Entropic,
            },
            epsilon: a.epsilon,
            max_iter: a.max_iter,
            tol: a.tol,
            execution: exec,
        },
        ridge: a.ridge,
        init,
        tol: None,
    };
    let fit = alternating_emd_fit(&src, &tgt, &config)?;
    fit.map.save(&a.out)?;
    let trace = a
        .trace
        .clone()
        .unwrap_or_else(|| sibling(&a.out, ".trace.tsv"));
    write_report(&trace, &m, |w| {
        writeln!(w, "iteration\tcost")?;
        for (i, c) in fit.trace.iter().enumerate() {
            writeln!(w, "{}\t{c}", i + 1)?;
        }
        Ok(())
    })?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}

fn overlap(a: crate::OverlapArgs, exec: Execution) -> CliResult {
    let [target, mapped] = &a.sphere[..] else {
        return Err(usage(
            "overlap takes exactly two --sphere files: target, then mapped",
        ));
    };
    let mut m = RunManifest::new("overlap", &a, Some(a.seed));
    let target = load_sphere(target, &mut m)?;
    let mapped = load_sphere(mapped, &mut m)?;
    let config = McConfig {
        samples: a.samples,
        seed: a.seed,
        sampler: match a.sampler {
            SamplerArg::BoundingBox => Sampler::BoundingBox,
            SamplerArg::BallUniform => Sampler::BallUniform,
        },
        execution: exec,
    };
    let report = mc_overlap(&target, &mapped, &config)?;
    write_report(&a.out, &m, |w| {
        writeln!(w, "{OVERLAP_TSV_HEADER}")?;
        writeln!(w, "{}", report.tsv_row())
    })?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}

fn features(a: crate::FeaturesArgs, exec: Execution) -> CliResult {
    let mut m = RunManifest::new("features", &a, None);
    let space = load_space(&a.embeddings, &mut m)?;
    let mut spheres = BTreeMap::new();
    for p in &a.sphere {
        let s = load_sphere(p, &mut m)?;
        if let Some(prev) = spheres.insert(s.ne_type(), s) {
            return Err(usage(format!(
                "more than one {} sphere given",
                prev.ne_type()
            )));
        }
    }
    let set = compute_features_with(&space, &spheres, exec)?;
    export_features(&set.rows, &a.out)?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}

fn neighbors(a: crate::NeighborsArgs, exec: Execution) -> CliResult {
    let mut m = RunManifest::new("neighbors", &a, None);
    let space = load_space(&a.embeddings, &mut m)?;
    let mut exclude = HashSet::new();
    let query: Vec<f64> = match (&a.token, &a.sphere) {
        (Some(tok), _) => {
            let v = space.get(tok).ok_or_else(|| {
                Error::Insufficient(format!("token {tok:?} is not in the vocabulary"))
            })?;
            exclude.insert(tok.clone());
            v.to_vec()
        }
        (None, Some(p)) => load_sphere(p, &mut m)?.center().as_slice().to_vec(),
        (None, None) => return Err(usage("give --token or --sphere")),
    };
    let hits = nearest_neighbors_with(&space, &query, a.k, &exclude, exec)?;
    write_report(&a.out, &m, |w| {
        writeln!(w, "rank\ttoken\tdistance")?;
        for (i, h) in hits.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", i + 1, h.token, h.distance)?;
        }
        Ok(())
    })?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}

fn candidates(a: crate::CandidatesArgs) -> CliResult {
    let mut m = RunManifest::new("candidates", &a, None);
    let space = load_space(&a.embeddings, &mut m)?;
    let sphere = load_sphere(&a.sphere, &mut m)?;
    let cands = candidate_entities(&space, &sphere, a.n)?;
    write_report(&a.out, &m, |w| write_candidates(&cands, w))?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}

fn synth(a: crate::SynthArgs) -> CliResult {
    let mut spec = match &a.spec {
        None => SynthSpec::benchmark(a.seed),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthSpec>(&text)
                .map_err(|e| Error::parse(p, e.line(), e.to_string()))?
        }
    };
    spec.seed = a.seed;
    if let Some(noise) = a.noise {
        spec.noise_sigma = noise;
    }
    let mut m = RunManifest::new("synth", &a, Some(spec.seed));
    if let Some(p) = &a.spec {
        m.add_input(p)?;
    }
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }

    let dir = &a.out;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let generated = generate_space(&spec)?;
    generated.space.save(dir.join("source.txt"))?;
    for (&t, sphere) in &generated.truth {
        let mut buf = Vec::new();
        let path = dir.join(format!("dict_{t}.txt"));
        write_dictionary(&generated.dictionary, t, &mut buf).map_err(|e| Error::io(&path, e))?;
        write_file(&path, &buf)?;
        sphere.save(dir.join(format!("truth_{t}.sphere")))?;
    }
    if let Some(transform) = &spec.transform {
        let target = derive_target_space(&generated.space, transform, spec.noise_sigma, spec.seed)?;
        target.space.save(dir.join("target.txt"))?;
        let all = target.seeds.pairs();
        let step = (all.len() / a.n).max(1);
        let picked: Vec<(String, String)> = all.iter().step_by(step).take(a.n).cloned().collect();
        let seeds = SeedPairs::new(picked)?;
        let path = dir.join("seeds.tsv");
        let mut buf = Vec::new();
        seeds.write_to(&mut buf).map_err(|e| Error::io(&path, e))?;
        write_file(&path, &buf)?;
        target.map.save(dir.join("map.txt"))?;
        for (&t, sphere) in &generated.truth {
            target
                .transform_sphere(sphere)?
                .save(dir.join(format!("target_truth_{t}.sphere")))?;
        }
    }
    let spec_json = serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n";
    write_file(&dir.join("spec.json"), spec_json.as_bytes())?;
    m.write(&dir.join("manifest.json"))?;
    Ok(())
}

fn scan_dims(a: crate::ScanDimsArgs, exec: Execution) -> CliResult {
    if a.dict.len() != a.ne_type.len() {
        return Err(usage(format!(
            "{} --dict files but {} --type values; give one type per dictionary",
            a.dict.len(),
            a.ne_type.len()
        )));
    }
    let mut m = RunManifest::new("scan-dims", &a, Some(a.seed));
    let mut spaces = BTreeMap::new();
    for p in &a.embeddings {
        let s = load_space(p, &mut m)?;
        let dim = s.dim();
        if spaces.insert(dim, s).is_some() {
            return Err(usage(format!("two embedding files have dimension {dim}")));
        }
    }
    let mut dict: Option<NeDictionary> = None;
    for (p, &t) in a.dict.iter().zip(&a.ne_type) {
        m.add_input(p)?;
        let d = load_dictionary(p, t.into())?;
        match &mut dict {
            None => dict = Some(d),
            Some(all) => all.merge(d),
        }
    }
    let dict = dict.expect("at least one dictionary");
    let split = split_dictionary(&dict, a.split, a.seed)?;
    let config = FitConfig {
        execution: exec,
        ..FitConfig::default()
    };
    let scan = scan_dimensions(&spaces, &split.train, &dict, &config)?;
    write_report(&a.out, &m, |w| {
        writeln!(w, "type\tdim\tf1\tbest")?;
        for r in &scan.rows {
            let best = scan.best.get(&r.ne_type).is_some_and(|&(d, _)| d == r.dim);
            writeln!(w, "{}\t{}\t{:.6}\t{}", r.ne_type, r.dim, r.f1, best)?;
        }
        Ok(())
    })?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}

fn project2d(a: crate::Project2dArgs) -> CliResult {
    let mut m = RunManifest::new("project2d", &a, None);
    let space = load_space(&a.embeddings, &mut m)?;
    let mut tokens: Vec<String> = a.token.clone();
    if let Some(p) = &a.tokens_file {
        m.add_input(p)?;
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        tokens.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned),
        );
    }
    if let Some(p) = &a.dict {
        m.add_input(p)?;
        let d = load_dictionary(p, NeType::Per)?;
        tokens.extend(
            d.entries(NeType::Per)
                .iter()
                .filter_map(|e| e.as_single().map(str::to_owned)),
        );
    }
    if tokens.is_empty() {
        return Err(usage("give tokens with --token, --tokens-file or --dict"));
    }
    let mut seen = HashSet::new();
    tokens.retain(|t| seen.insert(t.clone()));
    let points = nesphere::project_2d(&space, &tokens)?;
    write_report(&a.out, &m, |w| {
        writeln!(w, "token\tx\ty")?;
        write_projection(&points, w)
    })?;
    m.write(&RunManifest::path_for(&a.out))?;
    Ok(())
}
