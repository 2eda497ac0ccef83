//! `artsearch` subcommands. [`run`] maps every outcome to an exit code:
//! 0 success, 1 usage, 2 data error, 3 runtime error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use artsearch_core::encoder::{EncoderAdapter, EncoderDims, EncoderError};
use artsearch_core::engine::{Direction, Engine, EngineError, Query, RankedResult};
use artsearch_core::eval::{
    evaluation_pairs, generate_synthetic_corpus, latency_bench, recall_at_k, split_dataset,
    write_synthetic_corpus, EvalError, EvalReport, GalleryMode, LatencyReport, SplitSpec,
    SynthParams,
};
use artsearch_core::scoring::{FusionConfig, LocalAggregation, QueryEmbedding, ScoreOptions};
use artsearch_core::store::{
    file_ref, Catalog, Corpus, CorpusSide, EmbeddingMatrix, LocalEmbeddingSet, StoreError,
    StoreFiles, StoreManifest, MANIFEST_FILE, NORM_TOLERANCE,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ServiceConfig};
use crate::service::{self, LoadError, ServeError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } | EvalError::Json(_) => CliError::Runtime(e.to_string()),
            EvalError::Engine(e) => e.into(),
            EvalError::InvalidSplit(_)
            | EvalError::InvalidK
            | EvalError::InvalidRepetitions
            | EvalError::InvalidParams(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Encoder(EncoderError::EmptyInput) | EngineError::InvalidQuery(_) => {
                CliError::Usage(e.to_string())
            }
            EngineError::Encoder(EncoderError::Undecodable(_)) => CliError::Data(e.to_string()),
            EngineError::Encoder(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "artsearch",
    version,
    about = "Cross-modal image/text search engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Checksum raw store files and write a manifest for them.
    Ingest(IngestArgs),
    /// Run the HTTP search service.
    Serve(ServeArgs),
    /// Recall@k on a held-out split.
    Eval(EvalArgs),
    /// Per-query latency over precomputed queries.
    Bench(BenchArgs),
    /// Generate a synthetic paired corpus.
    Synth(SynthArgs),
    /// One-shot query printed as a table.
    Search(SearchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Aggregation {
    Mean,
    Lse,
}

#[derive(Debug, Clone, Args)]
struct FusionArgs {
    /// Global weight α in [0, 1] (default: the manifest's).
    #[arg(long)]
    alpha: Option<f64>,
    /// Attention temperature λ.
    #[arg(long, default_value_t = 9.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = Aggregation::Mean)]
    aggregation: Aggregation,
}

impl FusionArgs {
    fn config(&self, manifest_alpha: f64) -> FusionConfig {
        FusionConfig {
            alpha: self.alpha.unwrap_or(manifest_alpha),
            temperature_lambda: self.lambda,
            local_aggregation: match self.aggregation {
                Aggregation::Mean => LocalAggregation::Mean,
                Aggregation::Lse => LocalAggregation::LogSumExp,
            },
        }
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Directory holding image_global.npy, image_local.npy,
    /// image_local_offsets.npy, the three description_* files, and
    /// catalog.jsonl.
    #[arg(long)]
    dir: PathBuf,
    /// Corpus name (default: the directory name).
    #[arg(long)]
    name: Option<String>,
    /// Default global weight recorded in the manifest.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// L2-normalize every row and rewrite the store files first.
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// JSON service config (also ENGINE_CONFIG).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    listen: Option<std::net::IpAddr>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

/// Comma-separated integers, e.g. `1,5,10`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct List(Vec<usize>);

fn parse_list(s: &str) -> Result<List, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(List)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Both,
    #[value(alias = "t2i")]
    TextToImage,
    #[value(alias = "i2t")]
    ImageToText,
}

impl DirectionArg {
    fn directions(self) -> Vec<Direction> {
        match self {
            DirectionArg::Both => Direction::BOTH.to_vec(),
            DirectionArg::TextToImage => vec![Direction::TextToImage],
            DirectionArg::ImageToText => vec![Direction::ImageToText],
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GalleryArg {
    Test,
    Full,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// train,val,test sizes summing to the corpus size (default: every item
    /// in the test split).
    #[arg(long, value_parser = parse_list)]
    split: Option<List>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_list, default_value = "1,5,10")]
    k: List,
    #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
    direction: DirectionArg,
    /// Rank test queries against the test split only, or the whole corpus.
    #[arg(long, value_enum, default_value_t = GalleryArg::Test)]
    gallery: GalleryArg,
    #[command(flatten)]
    fusion: FusionArgs,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Number of stored items used as precomputed queries.
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
    direction: DirectionArg,
    /// Corpus shards per query; 1 scores on a single thread.
    #[arg(long, default_value_t = 1)]
    shards: usize,
    /// Seed for picking the query items.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    fusion: FusionArgs,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 6783)]
    n: usize,
    #[arg(long, default_value_t = 512)]
    dim: usize,
    /// Local vectors per item.
    #[arg(long, default_value_t = 8)]
    locals: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["text", "image"])))]
struct SearchArgs {
    #[arg(long)]
    text: Option<String>,
    /// Image file to search descriptions with.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            drop(stdout);
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest(a, out),
        Command::Serve(a) => serve(a),
        Command::Eval(a) => eval(a, out),
        Command::Bench(a) => bench(a, out),
        Command::Synth(a) => synth(a, out),
        Command::Search(a) => search(a, out),
    }
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Runtime(format!("writing output: {e}")))
}

/// `--manifest`, else `ENGINE_MANIFEST`, else `./manifest.json`.
fn manifest_path(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os("ENGINE_MANIFEST").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(MANIFEST_FILE))
}

/// Stand-in for commands that only score stored representations.
struct NoEncoder(EncoderDims);

impl EncoderAdapter for NoEncoder {
    fn encode_text(&self, _: &str) -> Result<QueryEmbedding, EncoderError> {
        Err(EncoderError::Unreachable("no encoder configured".into()))
    }

    fn encode_image(&self, _: &[u8]) -> Result<QueryEmbedding, EncoderError> {
        Err(EncoderError::Unreachable("no encoder configured".into()))
    }

    fn dims(&self) -> EncoderDims {
        self.0
    }

    fn mode(&self) -> &'static str {
        "none"
    }
}

fn offline_engine(corpus: Corpus, fusion: FusionConfig) -> Result<Engine, CliError> {
    let dims = EncoderDims {
        global: corpus.global_dim(),
        local: corpus.local_dim(),
    };
    fusion
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Engine::new(corpus, fusion, Arc::new(NoEncoder(dims)))?)
}

fn ingest(a: IngestArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.alpha) {
        return Err(CliError::Usage(format!(
            "--alpha must lie in [0, 1], got {}",
            a.alpha
        )));
    }
    let dir = &a.dir;
    let name = a.name.clone().unwrap_or_else(|| {
        std::fs::canonicalize(dir)
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "corpus".into())
    });
    let load_side = |prefix: &str| -> Result<CorpusSide, StoreError> {
        let global = EmbeddingMatrix::load(&dir.join(format!("{prefix}_global.npy")), None)?;
        let local = LocalEmbeddingSet::load(
            &dir.join(format!("{prefix}_local.npy")),
            &dir.join(format!("{prefix}_local_offsets.npy")),
            None,
        )?;
        CorpusSide::new(global, local)
    };
    let images = load_side("image")?;
    let descriptions = load_side("description")?;
    let catalog = Catalog::load(&dir.join("catalog.jsonl"))?;
    let mut corpus = Corpus::new(name, images, descriptions, catalog)?;
    corpus.default_fusion_weight = a.alpha;

    let path = if a.normalize {
        let mut zeros = 0;
        for side in [&mut corpus.images, &mut corpus.descriptions] {
            let (g, zg) =
                std::mem::replace(&mut side.global, EmbeddingMatrix::empty(1)?).normalize_rows();
            let (l, zl) =
                std::mem::replace(&mut side.local, LocalEmbeddingSet::empty(1)?).normalize_rows();
            side.global = g;
            side.local = l;
            zeros += zg + zl;
        }
        if zeros > 0 {
            tracing::warn!(zeros, "zero-norm rows left as zero vectors");
        }
        corpus.write(dir)?
    } else {
        let files = StoreFiles {
            image_global: file_ref(dir, "image_global.npy")?,
            image_local: file_ref(dir, "image_local.npy")?,
            image_local_offsets: file_ref(dir, "image_local_offsets.npy")?,
            description_global: file_ref(dir, "description_global.npy")?,
            description_local: file_ref(dir, "description_local.npy")?,
            description_local_offsets: file_ref(dir, "description_local_offsets.npy")?,
            catalog: file_ref(dir, "catalog.jsonl")?,
        };
        let normalized = unit_rows(&corpus.images.global) && unit_rows(&corpus.descriptions.global);
        let manifest = StoreManifest::new(
            corpus.name.clone(),
            corpus.len(),
            corpus.len(),
            corpus.global_dim(),
            corpus.local_dim(),
            files,
            normalized,
            a.alpha,
            dir,
        );
        let path = dir.join(MANIFEST_FILE);
        manifest.save(&path)?;
        path
    };
    // round-trip through the loader so a bad manifest never goes unnoticed
    Corpus::open(&path)?;
    emit(
        out,
        &format!("wrote {} ({} items)\n", path.display(), corpus.len()),
    )
}

fn unit_rows(m: &EmbeddingMatrix) -> bool {
    m.rows().all(|r| {
        let norm = r.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        (norm - 1.0).abs() <= NORM_TOLERANCE
    })
}

/// File config, then `ENGINE_*` variables, then flags.
fn service_config(
    config: Option<PathBuf>,
    manifest: Option<PathBuf>,
) -> Result<ServiceConfig, CliError> {
    let file = config.or_else(|| std::env::var_os("ENGINE_CONFIG").map(PathBuf::from));
    let mut cfg = match file {
        Some(p) => ServiceConfig::load(&p)?,
        None => ServiceConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    if let Some(m) = manifest {
        cfg.manifest = m;
    }
    Ok(cfg)
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    init_tracing();
    let mut cfg = service_config(a.config, a.manifest)?;
    if let Some(l) = a.listen {
        cfg.listen = l;
    }
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(d) = a.static_dir {
        cfg.static_dir = Some(d);
    }
    cfg.validate()?;
    if !cfg.manifest.is_file() {
        return Err(CliError::Data(format!(
            "{}: manifest not found",
            cfg.manifest.display()
        )));
    }
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Runtime(format!("starting runtime: {e}")))?;
    let result = runtime.block_on(async move {
        let addr = cfg.socket_addr();
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
            ServeError::Io(std::io::Error::new(
                e.kind(),
                format!("binding {addr}: {e}"),
            ))
        })?;
        tracing::info!(%addr, manifest = %cfg.manifest.display(), "listening");
        service::serve(cfg, listener, shutdown_signal()).await
    });
    runtime.shutdown_timeout(std::time::Duration::from_secs(5));
    match result {
        Ok(()) => Ok(()),
        Err(ServeError::Load(e)) => Err(e.into()),
        Err(e) => Err(CliError::Runtime(e.to_string())),
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    tracing::info!("shutting down");
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn eval(a: EvalArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let (manifest, corpus) = Corpus::open(&manifest_path(a.manifest))?;
    let n = corpus.len();
    let spec = match a.split.as_ref().map(|l| l.0.as_slice()) {
        None => SplitSpec {
            total: n,
            train: 0,
            val: 0,
            test: n,
            seed: a.seed,
        },
        Some(&[train, val, test]) => SplitSpec {
            total: n,
            train,
            val,
            test,
            seed: a.seed,
        },
        Some(other) => {
            return Err(CliError::Usage(format!(
                "--split takes train,val,test; got {} values",
                other.len()
            )))
        }
    };
    let split = split_dataset(&spec)?;
    let mode = match a.gallery {
        GalleryArg::Test => GalleryMode::Test,
        GalleryArg::Full => GalleryMode::Full,
    };
    let pairs = evaluation_pairs(&split, mode);
    let gallery = match mode {
        GalleryMode::Test => corpus.subset(&split.test)?,
        GalleryMode::Full => corpus,
    };
    let engine = offline_engine(gallery, a.fusion.config(manifest.default_fusion_weight))?;
    let mut report = EvalReport::default();
    for direction in a.direction.directions() {
        let r = recall_at_k(&engine, &pairs, &a.k.0, direction, true)?;
        if !r.is_monotone() {
            return Err(CliError::Runtime(format!(
                "recall is not monotone in k for {}: {:?}",
                direction.as_str(),
                r.recalls
            )));
        }
        report.recall.push(r);
    }
    if let Some(path) = &a.json {
        report.write_json(path)?;
    }
    emit(out, &report.to_table())
}

/// One timed configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRun {
    /// `fused` or `global-only`.
    pub mode: &'static str,
    pub alpha: f64,
    pub shards: usize,
    #[serde(flatten)]
    pub latency: LatencyReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchReport {
    pub runs: Vec<BenchRun>,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12} {:<15} {:>6} {:>8} {:>5} {:>10} {:>10} {:>10}",
            "mode", "direction", "alpha", "queries", "reps", "mean_ms", "p50_ms", "p95_ms"
        );
        for r in &self.runs {
            let l = &r.latency;
            let _ = writeln!(
                s,
                "{:<12} {:<15} {:>6.2} {:>8} {:>5} {:>10.3} {:>10.3} {:>10.3}",
                r.mode,
                l.direction.as_str(),
                r.alpha,
                l.query_count,
                l.repetitions,
                l.mean_ms,
                l.p50_ms,
                l.p95_ms
            );
        }
        s
    }

    /// Mean latency of the given mode and direction.
    pub fn mean_ms(&self, mode: &str, direction: Direction) -> Option<f64> {
        self.runs
            .iter()
            .find(|r| r.mode == mode && r.latency.direction == direction)
            .map(|r| r.latency.mean_ms)
    }
}

/// Settings for [`bench_engine`].
#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub queries: usize,
    pub repetitions: usize,
    pub k: usize,
    pub shards: usize,
    pub seed: u64,
    pub directions: Vec<Direction>,
    pub fusion: FusionConfig,
}

/// Times top-k retrieval with `settings.fusion` and again with global
/// similarity only (α = 1), using stored items as precomputed queries.
/// Query items are a seeded sample of the corpus.
pub fn bench_engine(corpus: Corpus, settings: &BenchSettings) -> Result<BenchReport, CliError> {
    let n = corpus.len();
    if settings.queries == 0 || settings.queries > n {
        return Err(CliError::Usage(format!(
            "--queries must be between 1 and the corpus size {n}, got {}",
            settings.queries
        )));
    }
    if settings.shards == 0 {
        return Err(CliError::Usage("--shards must be positive".into()));
    }
    let picked = split_dataset(&SplitSpec {
        total: n,
        train: n - settings.queries,
        val: 0,
        test: settings.queries,
        seed: settings.seed,
    })?
    .test;
    let options = ScoreOptions {
        shards: settings.shards,
    };
    let engine = offline_engine(corpus, settings.fusion)?.with_options(options);
    let mut report = BenchReport::default();
    let modes = [
        ("fused", settings.fusion),
        (
            "global-only",
            FusionConfig {
                alpha: 1.0,
                ..settings.fusion
            },
        ),
    ];
    let mut engine = Some(engine);
    for (mode, fusion) in modes {
        let e = engine.take().expect("engine").with_fusion(fusion)?;
        for &direction in &settings.directions {
            let queries = picked
                .iter()
                .map(|&i| e.stored_query(direction.query_side(), i, direction.query_modality()))
                .collect::<Result<Vec<_>, _>>()?;
            let latency = latency_bench(&e, &queries, settings.repetitions, direction, settings.k)?;
            report.runs.push(BenchRun {
                mode,
                alpha: fusion.alpha,
                shards: settings.shards,
                latency,
            });
        }
        engine = Some(e);
    }
    Ok(report)
}

fn bench(a: BenchArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let (manifest, corpus) = Corpus::open(&manifest_path(a.manifest))?;
    let settings = BenchSettings {
        queries: a.queries,
        repetitions: a.reps,
        k: a.k,
        shards: a.shards,
        seed: a.seed,
        directions: a.direction.directions(),
        fusion: a.fusion.config(manifest.default_fusion_weight),
    };
    let report = bench_engine(corpus, &settings)?;
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    emit(out, &report.to_table())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn synth(a: SynthArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let params = SynthParams {
        n: a.n,
        dim: a.dim,
        local_count: a.locals,
        noise: a.noise,
        seed: a.seed,
    };
    let corpus = generate_synthetic_corpus(&params)?;
    let manifest = write_synthetic_corpus(&corpus, &a.out)?;
    emit(
        out,
        &format!("wrote {} ({} items)\n", manifest.display(), a.n),
    )
}

fn search(a: SearchArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = service_config(a.config, a.manifest)?;
    cfg.validate()?;
    let k = a.k.unwrap_or(cfg.default_k);
    if k == 0 {
        return Err(CliError::Usage("--k must be positive".into()));
    }
    let query = match (a.text, a.image) {
        (Some(text), None) => Query::text(text, k)?,
        (None, Some(path)) => {
            let bytes = std::fs::read(&path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Query::image(bytes, k)?
        }
        _ => {
            return Err(CliError::Usage(
                "pass exactly one of --text or --image".into(),
            ))
        }
    };
    let engine = service::load_engine(&cfg)?;
    let results = engine.search(&query)?;
    emit(out, &results_table(&results))
}

/// Fixed-width table of ranked results.
pub fn results_table(results: &[RankedResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>4} {:>7} {:>8} {:>8} {:>8}  {:<16} description",
        "rank", "item", "fused", "global", "local", "external_id"
    );
    for r in results {
        let b = &r.breakdown;
        let _ = writeln!(
            s,
            "{:>4} {:>7} {:>8.4} {:>8.4} {:>8.4}  {:<16} {}",
            r.rank,
            b.item_id,
            b.fused_score,
            b.global_score,
            b.local_score,
            r.entry.external_id,
            r.entry.description.replace('\n', " ")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_definitions_are_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Data(String::new()).exit_code(), 2);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 3);
    }

    #[test]
    fn list_parsing() {
        assert_eq!(
            parse_list("5783, 500,500").unwrap(),
            List(vec![5783, 500, 500])
        );
        assert!(parse_list("1,x").is_err());
    }

    #[test]
    fn direction_aliases() {
        let cli = Cli::try_parse_from(["artsearch", "eval", "--direction", "t2i"]).unwrap();
        match cli.command {
            Command::Eval(a) => assert_eq!(a.direction, DirectionArg::TextToImage),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn search_needs_one_input() {
        assert!(Cli::try_parse_from(["artsearch", "search"]).is_err());
        assert!(
            Cli::try_parse_from(["artsearch", "search", "--text", "a", "--image", "b"]).is_err()
        );
    }
}
