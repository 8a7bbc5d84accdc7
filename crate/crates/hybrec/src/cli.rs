//! The `hybrec` command line. Stages communicate only through artifacts in
//! `--data-dir`.

use std::ffi::OsString;
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybrec_core::ann::AnnParams;
use hybrec_core::cbfembed::{align_vectors, embed_corpus, HashEmbedderConfig};
use hybrec_core::eval::{horizon_sweep, scaling_curve, CellOptions, CellResult};
use hybrec_core::graph::{assign_bins, year_bins};
use hybrec_core::recommend::{fuse, priors_profile, AuthorIndex, FusionStrategy, RecommendationList, Recommender, Scored};
use hybrec_core::robustness::{
    detect_duplicates, discrepancy_flags, impute_all_better_together, impute_all_centroid, top1_cosine_histogram,
    DiscrepancyParams, DuplicateParams,
};
use hybrec_core::{build_graph, coverage_stats, embed_graph, CorpusStore, EmbeddingMatrix, Method, SpectralParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

use crate::api::{self, RecommendationListJson};
use crate::artifacts::{self, DataDir};
use crate::error::Error;
use crate::fetch::{fetch_records_blocking, FetchConfig};
use crate::formats::{self, CurveMethod};
use crate::service::{self, ServiceState};

#[derive(Debug, Parser)]
#[command(name = "hybrec", version, about = "Hybrid content + citation-graph paper recommendation")]
pub struct Cli {
    /// TOML file of key = value defaults (flags override it).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Artifact directory (default: ./data).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Stdout format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutFormat>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cbf,
    Gb,
    Hybrid,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cbf => Method::Cbf,
            MethodArg::Gb => Method::Gb,
            MethodArg::Hybrid => Method::Hybrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Cbf,
    Gb,
}

impl From<SideArg> for Method {
    fn from(m: SideArg) -> Self {
        match m {
            SideArg::Cbf => Method::Cbf,
            SideArg::Gb => Method::Gb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Rrf,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImputeStrategy {
    Centroid,
    BetterTogether,
}

#[derive(Debug, Clone, Args)]
pub struct FusionOpts {
    #[arg(long, value_enum, default_value = "rrf")]
    pub fusion: FusionArg,
    #[arg(long, default_value_t = 60.0)]
    pub rrf_constant: f64,
    /// Content-side weight for weighted fusion.
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,
}

impl FusionOpts {
    fn strategy(&self) -> FusionStrategy {
        match self.fusion {
            FusionArg::Rrf => FusionStrategy::Rrf { constant: self.rrf_constant },
            FusionArg::Weighted => FusionStrategy::Weighted { weight: self.weight },
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a JSONL corpus (or fetch one) into the data directory.
    Ingest {
        /// JSONL file, or `-` for stdin.
        input: Option<PathBuf>,
        /// Fetch records from `{endpoint}/{id}` instead.
        #[arg(long, requires = "ids")]
        endpoint: Option<String>,
        /// File of ids, one per line.
        #[arg(long)]
        ids: Option<PathBuf>,
    },
    /// Build the citation graph.
    Graph,
    /// Spectral graph embedding.
    EmbedGb {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Content embedding, hashed from titles and abstracts or loaded.
    EmbedCbf {
        #[arg(long)]
        hash_dim: Option<usize>,
        /// Precomputed vectors: EMB1 (row-aligned) or `id<TAB>v,v,...` text.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Build and store the ANN index for one embedding.
    Index {
        #[arg(long, value_enum)]
        method: SideArg,
        #[arg(long)]
        max_degree: Option<usize>,
        #[arg(long)]
        ef_construction: Option<usize>,
    },
    /// Papers like this one.
    Recommend {
        #[arg(long)]
        paper: String,
        #[arg(long, value_enum, default_value = "hybrid")]
        method: MethodArg,
        #[arg(short = 'k', long = "limit", default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        fusion: FusionOpts,
    },
    /// Authors whose papers resemble this one.
    Authors {
        #[arg(long)]
        paper: String,
        #[arg(long, value_enum, default_value = "cbf")]
        method: SideArg,
        #[arg(short = 'k', long = "limit", default_value_t = 10)]
        k: usize,
    },
    /// Fuse two stored recommendation lists.
    Fuse {
        a: PathBuf,
        b: PathBuf,
        #[arg(short = 'k', long = "limit", default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        fusion: FusionOpts,
    },
    /// Citation counts and years of what each method recommends.
    Priors {
        #[arg(long, default_value_t = 100)]
        queries: usize,
        #[arg(short = 'k', long = "limit", default_value_t = 10)]
        k: usize,
    },
    /// Top-1 cosine histogram, duplicate and discrepancy flags.
    Corners {
        #[arg(long, default_value_t = 40)]
        bins: usize,
        /// Rows sampled for the histogram (default: all).
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0.99)]
        threshold: f64,
        #[arg(long, default_value_t = 0.95)]
        tau_hi: f64,
        #[arg(long, default_value_t = 0.2)]
        tau_lo: f64,
    },
    /// Fill missing vectors of one embedding.
    Impute {
        #[arg(long, value_enum)]
        target: SideArg,
        #[arg(long, value_enum, default_value = "centroid")]
        strategy: ImputeStrategy,
        /// Donor neighbors for better-together.
        #[arg(short = 'm', long, default_value_t = 10)]
        m: usize,
    },
    /// Hop-pair link prediction sweeps.
    Eval {
        #[arg(long, conflicts_with = "horizon", required_unless_present = "horizon")]
        scaling: bool,
        #[arg(long)]
        horizon: bool,
        /// Training bin counts (scaling) or the fixed training count (horizon).
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<u32>,
        /// Horizons; one value for scaling.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        h: Vec<u32>,
        #[arg(long, default_value_t = 100)]
        bins: u32,
        /// Fixed evaluation bin for scaling (default: t + h).
        #[arg(long)]
        eval_bin: Option<u32>,
        #[arg(long, default_value_t = 1000)]
        k_pairs: usize,
        /// Keep the partner among the anchor's neighbors when averaging.
        #[arg(long)]
        include_partner: bool,
        /// Also write each cell's test pairs as JSONL.
        #[arg(long)]
        export_pairs: bool,
    },
    /// Corpus statistics.
    Stats {
        #[arg(long)]
        coverage: bool,
    },
    /// Serve recommendations over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

/// Values a `--config` file may set. Flags win over the file.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub format: Option<OutFormat>,
    pub dim: Option<usize>,
    pub order: Option<usize>,
    pub mu: Option<f64>,
    pub theta: Option<f64>,
    pub oversample: Option<usize>,
    pub power_iters: Option<usize>,
    pub hash_dim: Option<usize>,
    pub max_degree: Option<usize>,
    pub ef_construction: Option<usize>,
    pub ef_search: Option<usize>,
}

enum Failure {
    Usage(String),
    Op(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Op(e)
    }
}

impl From<hybrec_core::Error> for Failure {
    fn from(e: hybrec_core::Error) -> Self {
        Failure::Op(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Op(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Op(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Ctx<'a> {
    data: DataDir,
    seed: u64,
    format: Option<OutFormat>,
    cfg: Config,
    out: &'a mut (dyn Write + Send),
}

impl Ctx<'_> {
    fn spectral(&self) -> SpectralParams {
        let d = SpectralParams::default();
        SpectralParams {
            dim: self.cfg.dim.unwrap_or(d.dim),
            order: self.cfg.order.unwrap_or(d.order),
            mu: self.cfg.mu.unwrap_or(d.mu),
            theta: self.cfg.theta.unwrap_or(d.theta),
            oversample: self.cfg.oversample.unwrap_or(d.oversample),
            power_iters: self.cfg.power_iters.unwrap_or(d.power_iters),
            seed: self.seed,
        }
    }

    fn ann(&self) -> AnnParams {
        let d = AnnParams::default();
        AnnParams {
            max_degree: self.cfg.max_degree.unwrap_or(d.max_degree),
            ef_construction: self.cfg.ef_construction.unwrap_or(d.ef_construction),
            seed: self.seed,
        }
    }

    fn ef_search(&self) -> usize {
        self.cfg.ef_search.unwrap_or(100)
    }

    fn json(&mut self, v: &impl serde::Serialize) -> Outcome {
        serde_json::to_writer_pretty(&mut *self.out, v)?;
        writeln!(self.out)?;
        Ok(())
    }

    fn recommender(&self, store: &CorpusStore, fusion: FusionStrategy) -> Result<Recommender, Error> {
        let cbf = self.data.load_side(Method::Cbf, store.len(), self.ann())?;
        let gb = self.data.load_side(Method::Gb, store.len(), self.ann())?;
        if cbf.is_none() && gb.is_none() {
            return Err(Error::MissingArtifact(self.data.path(&artifacts::embedding_file(Method::Gb))));
        }
        let mut r = Recommender::new(cbf, gb);
        r.ef_search = self.ef_search();
        r.fusion = fusion;
        Ok(r)
    }
}

fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn load_config(path: Option<&Path>) -> std::result::Result<Config, String> {
    let Some(path) = path else { return Ok(Config::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code: 0 success, 1 operational error, 2 usage.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    2
                }
            };
        }
    };
    let cfg = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(m) => {
            let _ = writeln!(err, "error: bad config: {m}");
            return 2;
        }
    };
    let threads = cli.threads.or(cfg.threads);
    let mut ctx = Ctx {
        data: DataDir::new(cli.data_dir.clone().or(cfg.data_dir.clone()).unwrap_or_else(|| PathBuf::from("data"))),
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        format: cli.format.or(cfg.format),
        cfg,
        out,
    };
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&mut ctx, cli.command)),
            Err(e) => Err(Failure::Usage(format!("--threads: {e}"))),
        },
        None => dispatch(&mut ctx, cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Op(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn dispatch(ctx: &mut Ctx<'_>, cmd: Command) -> Outcome {
    match cmd {
        Command::Ingest { input, endpoint, ids } => ingest(ctx, input, endpoint, ids),
        Command::Graph => graph(ctx),
        Command::EmbedGb { dim, order, mu, theta } => {
            let d = ctx.spectral();
            let p = SpectralParams {
                dim: dim.unwrap_or(d.dim),
                order: order.unwrap_or(d.order),
                mu: mu.unwrap_or(d.mu),
                theta: theta.unwrap_or(d.theta),
                ..d
            };
            embed_gb(ctx, p)
        }
        Command::EmbedCbf { hash_dim, vectors } => embed_cbf(ctx, hash_dim, vectors),
        Command::Index { method, max_degree, ef_construction } => {
            let d = ctx.ann();
            let p = AnnParams {
                max_degree: max_degree.unwrap_or(d.max_degree),
                ef_construction: ef_construction.unwrap_or(d.ef_construction),
                ..d
            };
            index(ctx, method.into(), p)
        }
        Command::Recommend { paper, method, k, fusion } => recommend(ctx, &paper, method.into(), k, fusion.strategy()),
        Command::Authors { paper, method, k } => authors(ctx, &paper, method.into(), k),
        Command::Fuse { a, b, k, fusion } => fuse_files(ctx, &a, &b, k, fusion.strategy()),
        Command::Priors { queries, k } => priors(ctx, queries, k),
        Command::Corners { bins, sample, threshold, tau_hi, tau_lo } => {
            corners(ctx, bins, sample, threshold, DiscrepancyParams { tau_hi, tau_lo })
        }
        Command::Impute { target, strategy, m } => impute(ctx, target.into(), strategy, m),
        Command::Eval { scaling, horizon: _, t, h, bins, eval_bin, k_pairs, include_partner, export_pairs } => {
            let e = EvalArgs { t, h, bins, eval_bin, k_pairs, include_partner, export_pairs };
            if scaling {
                eval_scaling(ctx, e)
            } else {
                eval_horizon(ctx, e)
            }
        }
        Command::Stats { coverage } => stats(ctx, coverage),
        Command::Serve { host, port } => serve(ctx, &host, port),
    }
}

fn ingest(ctx: &mut Ctx<'_>, input: Option<PathBuf>, endpoint: Option<String>, ids: Option<PathBuf>) -> Outcome {
    let (store, issues, failures) = match (input, endpoint, ids) {
        (Some(path), None, None) => {
            let parsed = if path.as_os_str() == "-" {
                formats::parse_records(std::io::stdin().lock())?
            } else {
                let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                formats::parse_records(BufReader::new(f))?
            };
            (parsed.store, parsed.issues, Vec::new())
        }
        (None, Some(endpoint), Some(ids)) => {
            let f = std::fs::File::open(&ids).map_err(|e| Error::io(&ids, e))?;
            let list: Vec<String> = BufReader::new(f)
                .lines()
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            let got = fetch_records_blocking(&endpoint, &list, &FetchConfig::default())?;
            let (store, issues) = CorpusStore::from_records(got.records.into_iter().map(|r| (None, r)));
            (store, issues, got.failures)
        }
        _ => return Err(Failure::Usage("ingest takes either an input file or --endpoint with --ids".into())),
    };
    for i in &issues {
        log::warn!("line {:?}: {}", i.line, i.message);
    }
    for f in &failures {
        log::warn!("fetch {}: {:?}: {}", f.id, f.kind, f.message);
    }
    ctx.data.write_with(artifacts::CORPUS, |b| formats::write_records(&store, b))?;
    ctx.data.write_with(artifacts::ID_MAP, |b| formats::write_id_map(&store, b))?;
    let unresolved = store.unresolved_references().len();
    ctx.json(&json!({
        "records": store.len(),
        "issues": issues.len(),
        "fetchFailures": failures.iter().map(|f| json!({"id": f.id, "kind": format!("{:?}", f.kind), "message": f.message})).collect::<Vec<_>>(),
        "unresolvedReferences": unresolved,
    }))
}

fn graph(ctx: &mut Ctx<'_>) -> Outcome {
    let store = ctx.data.load_corpus()?;
    let g = build_graph(&store);
    ctx.data.write_with(artifacts::GRAPH, |b| formats::write_graph(&g, b))?;
    ctx.json(&json!({ "nodes": g.node_count(), "edges": g.edge_count(), "digest": hex::encode(g.digest()) }))
}

fn embed_gb(ctx: &mut Ctx<'_>, p: SpectralParams) -> Outcome {
    let g = ctx.data.load_graph()?;
    let (emb, rep) = embed_graph(&g, &p)?;
    ctx.data
        .write_with(&artifacts::embedding_file(Method::Gb), |b| formats::write_embedding(&emb, b))?;
    ctx.json(&json!({
        "n": emb.n(), "dim": emb.dim(), "missing": emb.missing_count(),
        "peakBytes": { "factorize": rep.factorize.peak_bytes, "propagate": rep.propagate.peak_bytes },
    }))
}

fn embed_cbf(ctx: &mut Ctx<'_>, hash_dim: Option<usize>, vectors: Option<PathBuf>) -> Outcome {
    let store = ctx.data.load_corpus()?;
    let mut report = json!({});
    let emb = match vectors {
        None => {
            let cfg = HashEmbedderConfig {
                dim: hash_dim.or(ctx.cfg.hash_dim).unwrap_or(HashEmbedderConfig::default().dim),
                seed: ctx.seed,
                ..Default::default()
            };
            embed_corpus(&store, &cfg)?
        }
        Some(path) => {
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.starts_with(b"EMB1") {
                let mut e = formats::read_embedding(&bytes[..])?;
                if e.n() != store.len() {
                    return Err(Error::format("vectors", format!("{} rows for a corpus of {}", e.n(), store.len())).into());
                }
                e.method = Method::Cbf;
                e.source_digest = hybrec_core::cbfembed::content_digest(&store);
                e
            } else {
                let (dim, rows) = formats::read_text_vectors(BufReader::new(&bytes[..]))?;
                if dim == 0 {
                    return Err(Error::format("vectors", "no vectors in file").into());
                }
                let (e, rep) = align_vectors(&store, dim, rows)?;
                report = json!({ "unresolved": rep.unresolved.len(), "duplicates": rep.duplicates.len() });
                e
            }
        }
    };
    ctx.data
        .write_with(&artifacts::embedding_file(Method::Cbf), |b| formats::write_embedding(&emb, b))?;
    ctx.json(&json!({ "n": emb.n(), "dim": emb.dim(), "missing": emb.missing_count(), "alignment": report }))
}

fn index(ctx: &mut Ctx<'_>, method: Method, p: AnnParams) -> Outcome {
    let emb = ctx.data.load_embedding(method)?;
    let idx = hybrec_core::ann::AnnIndex::build(&emb, p)?;
    ctx.data
        .write_with(&artifacts::index_file(method), |b| formats::write_index(&idx.to_parts(), b))?;
    ctx.json(&json!({ "method": method.as_str(), "indexed": idx.len(), "maxDegree": p.max_degree, "efConstruction": p.ef_construction }))
}

fn list_json(store: &CorpusStore, list: &RecommendationList) -> RecommendationListJson {
    RecommendationListJson {
        query: store.external_id(list.query).unwrap_or_default().to_string(),
        method: list.method.as_str().to_string(),
        generated_at: list.generated_at,
        recommended_papers: api::items(store, list),
    }
}

fn api_failure(e: api::ApiError) -> Failure {
    match e {
        api::ApiError::UnknownPaper(id) => Failure::Op(Error::UnknownPaper(id)),
        api::ApiError::BadRequest(m) => Failure::Usage(m),
        other => Failure::Op(Error::Config(other.to_string())),
    }
}

fn recommend(ctx: &mut Ctx<'_>, paper: &str, method: Method, k: usize, fusion: FusionStrategy) -> Outcome {
    let store = ctx.data.load_corpus()?;
    let rec = ctx.recommender(&store, fusion)?;
    let mut list = api::recommend(&store, &rec, paper, method, k).map_err(api_failure)?;
    list.generated_at = now_secs();
    let j = list_json(&store, &list);
    if ctx.format == Some(OutFormat::Csv) {
        writeln!(ctx.out, "rank,paperId,title,score,citationCount")?;
        for (r, p) in j.recommended_papers.iter().enumerate() {
            writeln!(ctx.out, "{},{},{:?},{},{}", r + 1, p.paper_id, p.title, p.score, p.citation_count)?;
        }
        return Ok(());
    }
    ctx.json(&j)
}

fn authors(ctx: &mut Ctx<'_>, paper: &str, method: Method, k: usize) -> Outcome {
    let store = ctx.data.load_corpus()?;
    let emb = ctx.data.load_embedding(method)?;
    let q = store.resolve(paper).ok_or_else(|| Error::UnknownPaper(paper.to_string()))?;
    let idx = AuthorIndex::build(&store, &emb, ctx.ann())?;
    let found = idx.authors_like_this(&store, &emb, q, k, ctx.ef_search())?;
    let rows: Vec<_> = found.iter().map(|a| json!({ "name": a.name, "score": a.score })).collect();
    ctx.json(&json!({ "query": paper, "method": method.as_str(), "authors": rows }))
}

fn read_list(store: &CorpusStore, path: &Path) -> Result<RecommendationList, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let j: RecommendationListJson = serde_json::from_str(&text)?;
    let query = store.resolve(&j.query).ok_or_else(|| Error::UnknownPaper(j.query.clone()))?;
    let method = Method::parse(&j.method).ok_or_else(|| Error::format("recommendation list", format!("method {:?}", j.method)))?;
    let items = j
        .recommended_papers
        .iter()
        .map(|p| {
            let index = store.resolve(&p.paper_id).ok_or_else(|| Error::UnknownPaper(p.paper_id.clone()))?;
            Ok(Scored { index, score: p.score })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    // Stored lists keep their order; scores only break nothing here.
    Ok(RecommendationList { query, method, items, generated_at: j.generated_at })
}

fn fuse_files(ctx: &mut Ctx<'_>, a: &Path, b: &Path, k: usize, fusion: FusionStrategy) -> Outcome {
    let store = ctx.data.load_corpus()?;
    let la = read_list(&store, a)?;
    let lb = read_list(&store, b)?;
    let mut f = fuse(&la, &lb, fusion, k)?;
    f.generated_at = now_secs();
    let j = list_json(&store, &f);
    ctx.json(&j)
}

fn sample_queries(rec: &Recommender, n: usize, queries: usize, seed: u64) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n)
        .filter(|&q| rec.answers(q, Method::Cbf) && rec.answers(q, Method::Gb))
        .collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all.truncate(queries);
    all.sort_unstable();
    all
}

fn priors(ctx: &mut Ctx<'_>, queries: usize, k: usize) -> Outcome {
    let store = ctx.data.load_corpus()?;
    let rec = ctx.recommender(&store, FusionStrategy::default())?;
    let qs = sample_queries(&rec, store.len(), queries, ctx.seed);
    if qs.is_empty() {
        return Err(Error::Config("no paper has both a content and a graph vector".into()).into());
    }
    let mut lists = Vec::new();
    for &q in &qs {
        for m in [Method::Cbf, Method::Gb, Method::Hybrid] {
            lists.push(rec.papers_like_this(q, m, k)?);
        }
    }
    let rep = priors_profile(&lists, &store, k)?;
    let name = format!("priors_q{queries}_k{k}_s{}.csv", ctx.seed);
    let mut csv = Vec::new();
    formats::write_priors_csv(&store, &rep.rows, &mut csv)?;
    ctx.data.write(&name, &csv)?;
    if ctx.format == Some(OutFormat::Csv) {
        ctx.out.write_all(&csv)?;
        return Ok(());
    }
    let methods: Vec<_> = rep
        .methods
        .iter()
        .map(|m| {
            json!({
                "method": m.method.as_str(),
                "items": m.n_items,
                "meanCitations": m.citations.map(|s| s.mean),
                "medianCitations": m.citations.map(|s| s.median),
                "meanYear": m.years.map(|s| s.mean),
                "medianYear": m.years.map(|s| s.median),
                "excludedYear": m.excluded_year,
            })
        })
        .collect();
    ctx.json(&json!({ "queries": qs.len(), "csv": ctx.data.path(&name), "methods": methods }))
}

fn corners(ctx: &mut Ctx<'_>, bins: usize, sample: Option<usize>, threshold: f64, disc: DiscrepancyParams) -> Outcome {
    let store = ctx.data.load_corpus()?;
    let cbf = ctx
        .data
        .load_side(Method::Cbf, store.len(), ctx.ann())?
        .ok_or_else(|| Error::MissingArtifact(ctx.data.path(&artifacts::embedding_file(Method::Cbf))))?;
    let gb = if ctx.data.exists(&artifacts::embedding_file(Method::Gb)) {
        Some(ctx.data.load_embedding(Method::Gb)?)
    } else {
        None
    };
    let mut rows: Vec<usize> = cbf.index.indexed().collect();
    rows.sort_unstable();
    if let Some(n) = sample {
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(ctx.seed));
        rows.truncate(n);
        rows.sort_unstable();
    }
    let hist = top1_cosine_histogram(&cbf.index, &rows, bins, ctx.ef_search())?;
    let dup_params = DuplicateParams { threshold, ef_search: ctx.ef_search(), ..Default::default() };
    let dups = detect_duplicates(&cbf.index, gb.as_ref(), dup_params)?;
    let mut flags = dups.clone();
    let mut disc_summary = json!(null);
    if let Some(gb) = &gb {
        let cands = detect_duplicates(&cbf.index, None, DuplicateParams { threshold: disc.tau_hi, ..dup_params })?;
        let pairs: Vec<(usize, usize)> = cands.iter().map(|f| (f.a, f.b)).collect();
        let rep = discrepancy_flags(&cbf.emb, gb, disc, &pairs)?;
        disc_summary = json!({
            "evaluated": rep.evaluated,
            "flagged": rep.flags.iter().filter(|f| f.reason == hybrec_core::robustness::FlagReason::Discrepancy).count(),
            "unevaluable": rep.unevaluable,
        });
        flags.extend(rep.flags);
    }
    let tag = format!("b{bins}_t{threshold}_s{}", ctx.seed);
    let hist_name = format!("top1_hist_{tag}.csv");
    let flags_name = format!("flags_{tag}.jsonl");
    ctx.data.write_with(&hist_name, |b| formats::write_histogram_csv(&hist, b))?;
    ctx.data.write_with(&flags_name, |b| formats::write_flags(&store, &flags, b))?;
    ctx.json(&json!({
        "sampled": rows.len(),
        "fractionAtLeast099": hist.high_fraction,
        "duplicates": dups.len(),
        "discrepancy": disc_summary,
        "histogram": ctx.data.path(&hist_name),
        "flags": ctx.data.path(&flags_name),
    }))
}

fn impute(ctx: &mut Ctx<'_>, target: Method, strategy: ImputeStrategy, m: usize) -> Outcome {
    let store = ctx.data.load_corpus()?;
    let emb = ctx.data.load_embedding(target)?;
    let out = match strategy {
        ImputeStrategy::Centroid => impute_all_centroid(&ctx.data.load_graph()?, &emb)?,
        ImputeStrategy::BetterTogether => {
            let donor_method = if target == Method::Cbf { Method::Gb } else { Method::Cbf };
            let donor = ctx
                .data
                .load_side(donor_method, store.len(), ctx.ann())?
                .ok_or_else(|| Error::MissingArtifact(ctx.data.path(&artifacts::embedding_file(donor_method))))?;
            impute_all_better_together(&donor.emb, &donor.index, &emb, m, ctx.ef_search())?
        }
    };
    let name = match strategy {
        ImputeStrategy::Centroid => format!("{}.centroid.emb", target.as_str()),
        ImputeStrategy::BetterTogether => format!("{}.better-together-m{m}.emb", target.as_str()),
    };
    ctx.data.write_with(&name, |b| formats::write_embedding(&out.emb, b))?;
    ctx.json(&json!({
        "target": target.as_str(),
        "missingBefore": emb.missing_count(),
        "filled": out.filled.len(),
        "unimputable": out.unimputable.len(),
        "output": ctx.data.path(&name),
    }))
}

struct EvalArgs {
    t: Vec<u32>,
    h: Vec<u32>,
    bins: u32,
    eval_bin: Option<u32>,
    k_pairs: usize,
    include_partner: bool,
    export_pairs: bool,
}

impl EvalArgs {
    fn common_tag(&self, seed: u64) -> String {
        let lpo = if self.include_partner { "_withpartner" } else { "" };
        format!("k{}_s{seed}{lpo}", self.k_pairs)
    }
}

fn join(xs: &[u32]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("-")
}

fn eval_inputs(ctx: &Ctx<'_>) -> Result<(CorpusStore, hybrec_core::CitationGraph, Option<EmbeddingMatrix>), Error> {
    let store = ctx.data.load_corpus()?;
    let g = ctx.data.load_graph()?;
    let cbf = if ctx.data.exists(&artifacts::embedding_file(Method::Cbf)) {
        Some(ctx.data.load_embedding(Method::Cbf)?)
    } else {
        None
    };
    Ok((store, g, cbf))
}

fn write_curves(ctx: &mut Ctx<'_>, store: &CorpusStore, kind: &str, tag: &str, cells: &[CellResult], export_pairs: bool) -> Outcome {
    let gb_name = format!("eval_{kind}_{tag}_gb.csv");
    ctx.data.write_with(&gb_name, |b| formats::write_curve_csv(cells, CurveMethod::Gb, b))?;
    let mut files = vec![ctx.data.path(&gb_name)];
    if cells.iter().any(|c| c.cbf.is_some()) {
        let name = format!("eval_{kind}_{tag}_cbf.csv");
        ctx.data.write_with(&name, |b| formats::write_curve_csv(cells, CurveMethod::Cbf, b))?;
        files.push(ctx.data.path(&name));
    }
    if export_pairs {
        for c in cells {
            let name = format!("pairs_{kind}_{tag}_t{}_h{}.jsonl", c.t, c.h);
            ctx.data.write_with(&name, |b| formats::write_pairs(store, &c.pairs, b))?;
            files.push(ctx.data.path(&name));
        }
    }
    if ctx.format == Some(OutFormat::Csv) {
        let bytes = ctx.data.read(&gb_name)?;
        ctx.out.write_all(&bytes)?;
        return Ok(());
    }
    let points: Vec<String> = cells
        .iter()
        .map(|c| match c.cbf {
            Some(s) => format!("t={} h={} gb={:.4} cbf={:.4}", c.t, c.h, c.gb.auc, s.auc),
            None => format!("t={} h={} gb={:.4}", c.t, c.h, c.gb.auc),
        })
        .collect();
    writeln!(ctx.out, "{kind}: {}", points.join("; "))?;
    for f in files {
        writeln!(ctx.out, "wrote {}", f.display())?;
    }
    Ok(())
}

fn eval_scaling(ctx: &mut Ctx<'_>, e: EvalArgs) -> Outcome {
    if e.h.len() != 1 {
        return Err(Failure::Usage("--scaling takes a single --h".into()));
    }
    let (store, g, cbf) = eval_inputs(ctx)?;
    let bins = assign_bins(&store, e.bins, ctx.seed)?;
    let opts = CellOptions { seed: ctx.seed, spectral: ctx.spectral(), leave_partner_out: !e.include_partner };
    let cells = scaling_curve(&g, &bins, &e.t, e.h[0], e.eval_bin, e.k_pairs, &opts, cbf.as_ref()).map_err(usage_if_argument)?;
    let eval_bin = e.eval_bin.map_or("next".to_string(), |b| b.to_string());
    let tag = format!("b{}_t{}_h{}_e{eval_bin}_{}", e.bins, join(&e.t), e.h[0], e.common_tag(ctx.seed));
    write_curves(ctx, &store, "scaling", &tag, &cells, e.export_pairs)
}

fn eval_horizon(ctx: &mut Ctx<'_>, e: EvalArgs) -> Outcome {
    if e.t.len() != 1 {
        return Err(Failure::Usage("--horizon takes a single --t".into()));
    }
    let (store, g, cbf) = eval_inputs(ctx)?;
    let bins = year_bins(&store, e.bins)?;
    let opts = CellOptions { seed: ctx.seed, spectral: ctx.spectral(), leave_partner_out: !e.include_partner };
    let cells = horizon_sweep(&g, &bins, e.t[0], &e.h, e.k_pairs, &opts, cbf.as_ref()).map_err(usage_if_argument)?;
    let tag = format!("b{}_t{}_h{}_{}", e.bins, e.t[0], join(&e.h), e.common_tag(ctx.seed));
    write_curves(ctx, &store, "horizon", &tag, &cells, e.export_pairs)
}

fn usage_if_argument(e: hybrec_core::Error) -> Failure {
    match e {
        hybrec_core::Error::InvalidArgument(m) => Failure::Usage(m),
        other => other.into(),
    }
}

fn stats(ctx: &mut Ctx<'_>, coverage: bool) -> Outcome {
    let store = ctx.data.load_corpus()?;
    let g = if ctx.data.exists(artifacts::GRAPH) { ctx.data.load_graph()? } else { build_graph(&store) };
    let c = coverage_stats(&store, &g);
    if ctx.format == Some(OutFormat::Json) {
        return ctx.json(&json!({
            "nTotal": c.n_total, "nAbstract": c.n_abstract, "nLinked": c.n_linked, "nBoth": c.n_both,
            "fractionAbstract": c.fraction_abstract, "fractionLinked": c.fraction_linked, "fractionBoth": c.fraction_both,
            "edges": g.edge_count(),
        }));
    }
    writeln!(ctx.out, "n_total={}", c.n_total)?;
    writeln!(ctx.out, "edges={}", g.edge_count())?;
    if coverage {
        writeln!(ctx.out, "n_abstract={} fraction={:.2}", c.n_abstract, c.fraction_abstract)?;
        writeln!(ctx.out, "n_linked={} fraction={:.2}", c.n_linked, c.fraction_linked)?;
        writeln!(ctx.out, "n_both={} fraction={:.2}", c.n_both, c.fraction_both)?;
    }
    Ok(())
}

/// Loads every artifact the service needs; any digest mismatch aborts.
pub fn load_service_state(data: &DataDir, ann: AnnParams, ef_search: usize) -> Result<ServiceState, Error> {
    let store = data.load_corpus()?;
    let cbf = data.load_side(Method::Cbf, store.len(), ann)?;
    let gb = data.load_side(Method::Gb, store.len(), ann)?;
    if cbf.is_none() && gb.is_none() {
        return Err(Error::MissingArtifact(data.path(&artifacts::embedding_file(Method::Gb))));
    }
    let mut recommender = Recommender::new(cbf, gb);
    recommender.ef_search = ef_search;
    Ok(ServiceState { store, recommender })
}

fn serve(ctx: &mut Ctx<'_>, host: &str, port: u16) -> Outcome {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Failure::Usage(format!("bad address {host}:{port}: {e}")))?;
    let state = Arc::new(load_service_state(&ctx.data, ctx.ann(), ctx.ef_search())?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(service::serve(state, addr))?;
    Ok(())
}
