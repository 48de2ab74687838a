//! `fusionctl`: profile building, benchmark sampling, inference, evaluation
//! and simulation from the command line.

pub mod eval;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use forensic_fusion::agent::{
    ClientConfig, ClientMode, GuidelineSet, Pipeline, PipelineConfig, PipelineParts,
    ScriptedClient,
};
use forensic_fusion::benchmark::{
    conflict_vector, dedup_pool, stratified_sample, BenchmarkManifest, ConflictVector, PoolEntry,
    StratPlan,
};
use forensic_fusion::calibration::{LabeledScore, DEFAULT_ECE_BINS};
use forensic_fusion::clustering::{KChoice, ReliabilitySample};
use forensic_fusion::codec::{to_canonical_line, write_canonical_file};
use forensic_fusion::domain::io::{read_features, read_manifest, write_manifest, FeatureTable};
use forensic_fusion::domain::{DatasetManifest, FeatureRegistry, Modality, DEFAULT_THRESHOLD};
use forensic_fusion::experts::{
    build_adapter, build_adapters, register_expert, remove_expert, AdapterSpec,
    ExpertRegistration, PanelConfig, ProfileData,
};
use forensic_fusion::profiling::{build_profiles, collect_scores, write_profiles, ProfileBuildOptions};
use forensic_fusion::report::{emit, parse_report_json, ReportFormat};
use forensic_fusion::simulator::{generate_panel, write_panel, PanelSpec};
use forensic_fusion::store::ProfileStore;

use eval::{render_strata_csv, render_table, summarize, Outcome};

/// Bad flags or missing inputs; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Some samples failed while the rest of the batch completed; exits with 1.
#[derive(Debug)]
pub struct PartialFailure(pub usize);

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} samples failed", self.0)
    }
}

impl std::error::Error for PartialFailure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_store(dir: &Path) -> Result<ProfileStore> {
    let store = ProfileStore::new(dir);
    require(&store.panel_path(), "profile store panel")?;
    Ok(store)
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(usage(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

#[derive(Parser, Debug)]
#[command(name = "fusionctl", version, about = "Multi-expert fusion engine for AI-generated image detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic panel from a spec file.
    Simulate(SimulateArgs),
    /// Build expert and clustering profiles into a store.
    ProfileBuild(ProfileBuildArgs),
    /// Re-load a store and check every invariant.
    Validate(ValidateArgs),
    /// Draw a conflict-stratified benchmark from a candidate pool.
    SampleBenchmark(SampleArgs),
    /// Run the staged pipeline over a manifest.
    Infer(InferArgs),
    /// Score reports against ground truth.
    Evaluate(EvaluateArgs),
    /// Add an expert to a store without touching other profiles.
    RegisterExpert(RegisterArgs),
    /// Remove an expert and its profile from a store.
    RemoveExpert(RemoveArgs),
}

#[derive(Args, Debug, Clone)]
pub struct FeatureArgs {
    /// Feature sidecar files.
    #[arg(long = "features")]
    pub features: Vec<PathBuf>,
    /// Expected dimension override, e.g. `clip=16`.
    #[arg(long = "feature-dim", value_parser = parse_dim)]
    pub feature_dims: Vec<(Modality, usize)>,
}

fn parse_dim(s: &str) -> std::result::Result<(Modality, usize), String> {
    let (m, d) = s.split_once('=').ok_or("expected MODALITY=DIM")?;
    let m: Modality = m.parse().map_err(|e: forensic_fusion::Error| e.to_string())?;
    let d: usize = d.parse().map_err(|e: std::num::ParseIntError| e.to_string())?;
    Ok((m, d))
}

impl FeatureArgs {
    fn load(&self) -> Result<FeatureTable> {
        let mut reg = FeatureRegistry::default();
        for (m, d) in &self.feature_dims {
            reg = reg.with_dim(*m, *d);
        }
        let mut table = FeatureTable::new();
        for p in &self.features {
            require(p, "feature sidecar")?;
            table.merge(read_features(p, &reg).with_context(|| format!("reading {}", p.display()))?);
        }
        Ok(table)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the panel spec file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write `train.jsonl`, `val.jsonl` and `test.jsonl` with this many
    /// leading samples in train; requires `--val`.
    #[arg(long, requires = "val")]
    pub train: Option<usize>,
    #[arg(long, requires = "train")]
    pub val: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KArg {
    Auto,
    Registry,
}

#[derive(Args, Debug)]
pub struct ProfileBuildArgs {
    /// Panel config; replay paths resolve against its directory.
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Store directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Fixed cluster count; overrides `--k-rule`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "registry")]
    pub k_rule: KArg,
    #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub no_expert_profiles: bool,
    #[arg(long)]
    pub no_clustering_profiles: bool,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub profiles: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Candidate pool manifests.
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Manifests whose content must not appear in the benchmark.
    #[arg(long = "exclude")]
    pub exclude: Vec<PathBuf>,
    #[arg(long, default_value_t = 15)]
    pub per_cell: usize,
    /// Dataset order; defaults to sorted names from the pool.
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Live,
    Scripted,
    Rule,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Json,
    Markdown,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Profile store holding the panel.
    #[arg(long)]
    pub profiles: PathBuf,
    /// Panel config used to build adapters; defaults to the store's panel.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "rule")]
    pub mode: ModeArg,
    /// Scripted replies for the semantic analyzer.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Scripted replies for narration and arbitration.
    #[arg(long)]
    pub text_transcript: Option<PathBuf>,
    /// Live endpoint; `FUSION_LLM_ENDPOINT` takes precedence.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value = "")]
    pub model: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub guidelines: Option<PathBuf>,
    #[arg(long, default_value_t = forensic_fusion::agent::DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long)]
    pub no_expert_profiles: bool,
    #[arg(long)]
    pub no_clustering_profiles: bool,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of `<id>.json` reports.
    #[arg(long)]
    pub reports: PathBuf,
    /// Benchmark manifest supplying the conflict cells.
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed to record; defaults to the reports' seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Http,
    Subprocess,
    Replay,
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub id: String,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Endpoint URL, command line, or replay file depending on `--kind`.
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value = "")]
    pub desc: String,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Labelled splits for a full profile; without them the expert gets a
    /// template profile.
    #[arg(long, requires = "val")]
    pub train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub val: Option<PathBuf>,
    /// With `--val`, re-rank existing clustering profiles.
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct RemoveArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub id: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::ProfileBuild(a) => cmd_profile_build(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::SampleBenchmark(a) => cmd_sample_benchmark(&a),
        Command::Infer(a) => cmd_infer(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::RegisterExpert(a) => cmd_register(&a),
        Command::RemoveExpert(a) => cmd_remove(&a),
    }
}

fn load_manifest(path: &Path, what: &str) -> Result<DatasetManifest> {
    require(path, what)?;
    read_manifest(path, None).with_context(|| format!("reading {what} {}", path.display()))
}

fn load_panel(path: &Path) -> Result<PanelConfig> {
    require(path, "panel config")?;
    PanelConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Rewrites relative replay paths against `base` so the panel can live in
/// another directory.
fn absolutize(panel: &mut PanelConfig, base: &Path) -> Result<()> {
    for e in &mut panel.experts {
        if let AdapterSpec::Replay { manifest } = &mut e.adapter {
            if manifest.is_relative() {
                let joined = base.join(&*manifest);
                *manifest = std::fs::canonicalize(&joined)
                    .with_context(|| format!("replay file {}", joined.display()))?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Header<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

fn write_header<T: Serialize>(path: &Path, command: &str, seed: u64, body: T) -> Result<()> {
    write_canonical_file(path, &Header { command, seed, body })?;
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    require(&a.spec, "simulator spec")?;
    let mut spec = PanelSpec::load(&a.spec).map_err(|e| usage(e.to_string()))?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let panel = generate_panel(&spec)?;
    write_panel(&a.out, &spec, &panel)?;
    if let (Some(t), Some(v)) = (a.train, a.val) {
        if t + v > spec.samples {
            return Err(usage(format!("--train {t} --val {v} exceed {} samples", spec.samples)));
        }
        let (train, val, test) = panel.split(t, v)?;
        write_manifest(&a.out.join("train.jsonl"), &train)?;
        write_manifest(&a.out.join("val.jsonl"), &val)?;
        write_manifest(&a.out.join("test.jsonl"), &test)?;
    }
    write_header(&a.out.join("simulation.json"), "simulate", spec.seed, serde_json::json!({ "spec": spec }))?;
    println!("simulated {} samples into {} (seed {})", spec.samples, a.out.display(), spec.seed);
    Ok(())
}

pub fn cmd_profile_build(a: &ProfileBuildArgs) -> Result<()> {
    let train = load_manifest(&a.train, "train manifest")?;
    let val = load_manifest(&a.val, "val manifest")?;
    let mut panel = load_panel(&a.panel)?;
    absolutize(&mut panel, &parent_dir(&a.panel))?;
    let features = a.features.load()?;
    let adapters = build_adapters(&panel, Path::new("."))?;
    let mut samples = train.samples().to_vec();
    samples.extend_from_slice(val.samples());
    let scores = collect_scores(&adapters, &samples)?;
    let mut opts = ProfileBuildOptions {
        bins: a.bins,
        expert_profiles: !a.no_expert_profiles,
        clustering_profiles: !a.no_clustering_profiles,
        ..ProfileBuildOptions::default()
    };
    opts.clustering.seed = a.seed;
    opts.clustering.k = match (a.k, a.k_rule) {
        (Some(k), _) => KChoice::Fixed(k),
        (None, KArg::Auto) => KChoice::Auto,
        (None, KArg::Registry) => KChoice::RegistryDefault,
    };
    let built = build_profiles(&panel, &train, &val, &scores, &features, &opts)?;
    let store = ProfileStore::new(&a.out);
    write_profiles(&store, &panel, &built)?;
    write_header(
        &a.out.join("build.json"),
        "profile-build",
        a.seed,
        serde_json::json!({
            "train": train.len(),
            "val": val.len(),
            "expert_profiles": built.expert_profiles.keys().collect::<Vec<_>>(),
            "clustering_profiles": built.clustering_profiles.keys().collect::<Vec<_>>(),
        }),
    )?;
    println!(
        "built {} expert and {} clustering profiles in {} (seed {})",
        built.expert_profiles.len(),
        built.clustering_profiles.len(),
        a.out.display(),
        a.seed
    );
    Ok(())
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let store = require_store(&a.profiles)?;
    let loaded = store.load_all()?;
    for p in loaded.expert_profiles.values() {
        p.calibration.validate()?;
    }
    println!(
        "ok: {} experts, {} clustering profiles",
        loaded.expert_profiles.len(),
        loaded.clustering_profiles.len()
    );
    Ok(())
}

pub fn cmd_sample_benchmark(a: &SampleArgs) -> Result<()> {
    let mut panel = load_panel(&a.panel)?;
    absolutize(&mut panel, &parent_dir(&a.panel))?;
    let adapters = build_adapters(&panel, Path::new("."))?;
    let mut pool = Vec::new();
    let mut names = BTreeSet::new();
    for m in &a.manifests {
        let manifest = load_manifest(m, "pool manifest")?;
        for s in manifest.into_samples() {
            let scores = adapters
                .iter()
                .map(|ad| ad.score(&s).with_context(|| format!("scoring {} with {}", s.id, ad.expert_id())))
                .collect::<Result<Vec<f64>>>()?;
            let conflict = conflict_vector(&scores, s.ground_truth, DEFAULT_THRESHOLD)?;
            names.insert(s.source_dataset.clone());
            pool.push(PoolEntry { sample: s, conflict });
        }
    }
    let mut exclude = HashSet::new();
    for e in &a.exclude {
        exclude.extend(load_manifest(e, "exclusion manifest")?.content_hashes());
    }
    let pool = dedup_pool(pool, &exclude).kept;
    let datasets = if a.datasets.is_empty() {
        names.into_iter().collect()
    } else {
        a.datasets.clone()
    };
    let plan = StratPlan {
        experts: adapters.len(),
        datasets,
        per_cell: a.per_cell,
        threshold: DEFAULT_THRESHOLD,
    };
    let bm = stratified_sample(&pool, &plan, a.seed).map_err(|e| usage(e.to_string()))?;
    bm.write(&a.out)?;
    println!(
        "sampled {} of {} target ({}), seed {}",
        bm.header.realized_count, bm.header.target_count, bm.header.coverage_text, a.seed
    );
    Ok(())
}

fn scripted(path: &Option<PathBuf>, what: &str) -> Result<Option<Box<dyn forensic_fusion::agent::LanguageModel>>> {
    match path {
        Some(p) => {
            require(p, what)?;
            Ok(Some(Box::new(ScriptedClient::from_file(p)?)))
        }
        None => Ok(None),
    }
}

pub fn cmd_infer(a: &InferArgs) -> Result<()> {
    let store = require_store(&a.profiles)?;
    let loaded = store.load_all()?;
    let (panel, base) = match &a.panel {
        Some(p) => (load_panel(p)?, parent_dir(p)),
        None => (loaded.panel.clone(), a.profiles.clone()),
    };
    if panel.signal_ids() != loaded.panel.signal_ids() {
        return Err(usage("--panel lists different experts than the store"));
    }
    let adapters = build_adapters(&panel, &base)?;
    let manifest = load_manifest(&a.manifest, "manifest")?;
    let features = a.features.load()?;
    let guidelines = match &a.guidelines {
        Some(d) => GuidelineSet::load_dir(d)?,
        None => GuidelineSet::builtin(),
    };
    let (vision, text) = match a.mode {
        ModeArg::Rule => (None, None),
        ModeArg::Scripted => {
            if a.transcript.is_none() {
                return Err(usage("--mode scripted needs --transcript"));
            }
            (
                scripted(&a.transcript, "transcript")?,
                scripted(&a.text_transcript, "text transcript")?,
            )
        }
        ModeArg::Live => {
            let cfg = ClientConfig {
                mode: ClientMode::Live,
                endpoint: a.endpoint.clone(),
                model: a.model.clone(),
                seed: a.seed,
                ..ClientConfig::rule()
            };
            (cfg.build().map_err(|e| usage(e.to_string()))?, cfg.build()?)
        }
    };
    let config = PipelineConfig {
        use_expert_profiles: !a.no_expert_profiles,
        use_clustering_profiles: !a.no_clustering_profiles,
        lambda: a.lambda,
        seed: a.seed,
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline::new(PipelineParts {
        guidelines,
        panel: loaded.panel,
        adapters,
        expert_profiles: loaded.expert_profiles,
        clustering_profiles: loaded.clustering_profiles,
        features,
        vision,
        text,
        config,
    })?;
    let format = match a.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
    let results: Vec<_> = pool.install(|| {
        manifest
            .samples()
            .par_iter()
            .map(|s| pipeline.run(s))
            .collect()
    });
    let mut failures = Vec::new();
    for (s, r) in manifest.samples().iter().zip(results) {
        match r {
            Ok(report) => {
                let path = a.out.join(format!("{}.{}", s.id, format.extension()));
                std::fs::write(&path, emit(&report, format)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Err(f) => {
                eprintln!("{f}");
                failures.push(to_canonical_line(&f.diagnostic)?);
            }
        }
    }
    let fail_path = a.out.join("failures.jsonl");
    if failures.is_empty() {
        let _ = std::fs::remove_file(&fail_path);
    } else {
        std::fs::write(&fail_path, failures.join("\n") + "\n")?;
    }
    write_header(
        &a.out.join("run.json"),
        "infer",
        a.seed,
        serde_json::json!({
            "config_fingerprint": pipeline.fingerprint(),
            "samples": manifest.len(),
            "failures": failures.len(),
        }),
    )?;
    println!(
        "{} reports, {} failures in {} (seed {})",
        manifest.len() - failures.len(),
        failures.len(),
        a.out.display(),
        a.seed
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(PartialFailure(failures.len()).into())
    }
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest, "manifest")?;
    require(&a.reports, "reports directory")?;
    let cells: Option<BTreeMap<String, u64>> = match &a.benchmark {
        Some(b) => {
            require(b, "benchmark manifest")?;
            let bm = BenchmarkManifest::read(b)?;
            Some(bm.entries.iter().map(|e| (e.sample_id.clone(), e.cell_index)).collect())
        }
        None => None,
    };
    let experts = match &a.benchmark {
        Some(b) => Some(BenchmarkManifest::read(b)?.header.plan.experts),
        None => None,
    };
    let mut outcomes = Vec::new();
    let mut missing = Vec::new();
    let mut seeds = BTreeSet::new();
    for s in manifest.samples() {
        let path = a.reports.join(format!("{}.json", s.id));
        let Ok(bytes) = std::fs::read(&path) else {
            missing.push(s.id.clone());
            continue;
        };
        let r = parse_report_json(&bytes).with_context(|| format!("reading {}", path.display()))?;
        seeds.insert(r.seed);
        let cell = match (&cells, experts) {
            (Some(c), Some(j)) => c.get(&s.id).map(|i| ConflictVector::from_cell(*i, j)).transpose()?,
            _ => {
                let raw: Option<Vec<f64>> = r.evidence.experts.entries.iter().map(|e| e.raw_score).collect();
                raw.map(|sc| conflict_vector(&sc, s.ground_truth, DEFAULT_THRESHOLD)).transpose()?
            }
        };
        outcomes.push(Outcome {
            sample: s,
            predicted: r.verdict.label,
            cell,
        });
    }
    let seed = match (a.seed, seeds.len()) {
        (Some(s), _) => s,
        (None, 1) => *seeds.iter().next().expect("one seed"),
        (None, 0) => 42,
        (None, _) => bail!("reports carry different seeds {seeds:?}; pass --seed"),
    };
    let summary = summarize(&outcomes, missing, seed);
    std::fs::create_dir_all(&a.out)?;
    write_canonical_file(&a.out.join("summary.json"), &summary)?;
    let table = render_table(&summary);
    std::fs::write(a.out.join("table.txt"), &table)?;
    std::fs::write(a.out.join("strata.csv"), render_strata_csv(&summary))?;
    print!("{table}");
    if !summary.missing.is_empty() {
        eprintln!("{} manifest samples have no report", summary.missing.len());
    }
    Ok(())
}

pub fn cmd_register(a: &RegisterArgs) -> Result<()> {
    let store = ProfileStore::new(&a.profiles);
    std::fs::create_dir_all(&a.profiles)?;
    let adapter = match a.kind {
        KindArg::Http => AdapterSpec::HttpService {
            endpoint: a.target.clone(),
        },
        KindArg::Subprocess => AdapterSpec::Subprocess {
            command: a.target.split_whitespace().map(str::to_string).collect(),
        },
        KindArg::Replay => {
            require(Path::new(&a.target), "replay file")?;
            AdapterSpec::Replay {
                manifest: std::fs::canonicalize(&a.target)?,
            }
        }
    };
    let mut reg = ExpertRegistration::new(a.id.clone(), adapter, a.desc.clone());
    if let Some(t) = a.timeout_ms {
        reg.timeout_ms = t;
    }
    let new_adapter = build_adapter(&reg, &a.profiles)?;
    let (mut train_ls, mut val_ls) = (Vec::new(), Vec::new());
    let mut rerank = None;
    if let (Some(t), Some(v)) = (&a.train, &a.val) {
        let train = load_manifest(t, "train manifest")?;
        let val = load_manifest(v, "val manifest")?;
        let one = std::slice::from_ref(&new_adapter);
        let mut samples = train.samples().to_vec();
        samples.extend_from_slice(val.samples());
        let scores = &collect_scores(one, &samples)?[&a.id];
        train_ls = train.samples().iter().map(|s| LabeledScore::new(s.id.clone(), scores[&s.id], s.ground_truth)).collect();
        val_ls = val.samples().iter().map(|s| LabeledScore::new(s.id.clone(), scores[&s.id], s.ground_truth)).collect();
        if !a.features.features.is_empty() {
            let features = a.features.load()?;
            let loaded = store.load_all()?;
            let existing = build_adapters(&loaded.panel, &a.profiles)?;
            let old = collect_scores(&existing, val.samples())?;
            let new_profile = forensic_fusion::calibration::build_expert_profile(&a.id, &a.desc, &train_ls, &val_ls, a.bins)?;
            let mut bundles: BTreeMap<Modality, Vec<ReliabilitySample>> = BTreeMap::new();
            for s in val.samples() {
                let mut per = BTreeMap::new();
                for (id, m) in &old {
                    per.insert(id.clone(), loaded.expert_profiles[id].calibrate(m[&s.id])?);
                }
                per.insert(a.id.clone(), new_profile.calibrate(scores[&s.id])?);
                for (m, fv) in features.vectors_of(&s.id) {
                    bundles.entry(m).or_default().push(ReliabilitySample {
                        sample_id: s.id.clone(),
                        features: fv,
                        truth: s.ground_truth,
                        scores: per.clone(),
                    });
                }
            }
            rerank = Some(bundles);
        }
    }
    let data = (!train_ls.is_empty()).then_some(ProfileData {
        train: &train_ls,
        val: &val_ls,
        bins: a.bins,
    });
    let panel = register_expert(&store, reg, data, rerank.as_ref())?;
    println!(
        "registered {} ({} profile); panel now {:?} (seed {})",
        a.id,
        if data.is_some() { "full" } else { "template" },
        panel.signal_ids(),
        a.seed
    );
    Ok(())
}

pub fn cmd_remove(a: &RemoveArgs) -> Result<()> {
    let panel = remove_expert(&require_store(&a.profiles)?, &a.id)?;
    println!("removed {}; panel now {:?} (seed {})", a.id, panel.signal_ids(), a.seed);
    Ok(())
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}
