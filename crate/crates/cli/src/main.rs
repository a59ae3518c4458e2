use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use pathmark_core::classifier::{classify, ClassifyError, LabeledCorpus};
use pathmark_core::eval::{
    benchmark_latency, evaluate_mrr, mutate_corpus, read_mutants, write_mutants, EvalError, MutationConfig,
    MutationContext, TextIndex, TextParams,
};
use pathmark_core::index::{Index, IndexConfig, IndexError, MANIFEST_FILE, META_FILE};
use pathmark_core::ingest::{crawl_directory, index_corpus, CorpusManifest, IngestError, IngestOptions, DEFAULT_BATCH_SIZE};
use pathmark_core::model::{parse_model, Model, ModelError, ModelFormat};
use pathmark_core::scorer::{search_model, ScoreError, ScoringParams};
use pathmark_service::{QueryStats, SearchHit, SearchResponse, ServiceConfig, DEFAULT_MAX_BODY};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "pathmark", version, about = "Search typed object-graph models by example")]
struct Cli {
    /// Index directory
    #[arg(long, global = true, env = "PATHMARK_INDEX", default_value = "pathmark-index")]
    index: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// JSON tokenizer/filter/threshold settings, applied when the index is created
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Crawl a directory and add its models to the index
    Index {
        #[arg(long = "type")]
        model_type: String,
        /// Relative glob; repeatable. Defaults to JSON, XMI and Ecore files
        #[arg(long = "glob")]
        globs: Vec<String>,
        /// Do not keep the original bytes
        #[arg(long)]
        no_source: bool,
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        corpus: PathBuf,
    },
    /// Rank indexed models against an example model
    Search {
        /// Defaults to the type declared in the query file
        #[arg(long = "type")]
        model_type: Option<String>,
        #[arg(long, default_value_t = 20)]
        max: usize,
        #[arg(long)]
        explain: bool,
        query: PathBuf,
    },
    /// Label a model by weighted vote of its nearest labeled neighbors
    Classify {
        #[arg(long = "type")]
        model_type: Option<String>,
        /// CSV with header `model_id,label`
        #[arg(long)]
        labels: PathBuf,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        query: PathBuf,
    },
    /// Serve the HTTP API over a read-only view of the index
    Serve {
        #[arg(long, env = "PATHMARK_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Allowed origins, comma separated; `*` for any
        #[arg(long = "cors", env = "PATHMARK_CORS", value_delimiter = ',', default_value = "*")]
        cors: Vec<String>,
        #[arg(long, env = "PATHMARK_LABELS")]
        labels: Option<PathBuf>,
        #[arg(long, env = "PATHMARK_MAX_BODY", default_value_t = DEFAULT_MAX_BODY)]
        max_body: usize,
    },
    /// Corpus statistics per model type
    Stats,
    /// Known-item queries, mean reciprocal rank and latency
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    /// path-based BM25 over the index
    Mar,
    /// BM25 over name tokens only
    Text,
}

impl Engine {
    fn id(self) -> &'static str {
        match self {
            Engine::Mar => "mar",
            Engine::Text => "text",
        }
    }
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Derive known-item queries from indexed models
    Mutate {
        #[arg(long = "type")]
        model_type: String,
        #[arg(long)]
        out: PathBuf,
        /// Neighborhood radii, cycled over the models
        #[arg(long = "radius", value_delimiter = ',')]
        radii: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Name clusters used for renames
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Mean reciprocal rank of each query's origin
    Mrr {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value_t = Engine::Mar)]
        engine: Engine,
        #[arg(long = "type")]
        model_type: Option<String>,
    },
    /// Query latency at growing index sizes
    Bench {
        #[arg(long = "type")]
        model_type: String,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        max: usize,
    },
}

enum Failure {
    User(String),
    Internal(String),
}

fn user(e: impl Display) -> Failure {
    Failure::User(e.to_string())
}

fn internal(e: impl Display) -> Failure {
    Failure::Internal(e.to_string())
}

impl From<IndexError> for Failure {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Store(_) | IndexError::Codec(_) | IndexError::Io { .. } | IndexError::Key(_) => internal(e),
            _ => user(e),
        }
    }
}

impl From<ScoreError> for Failure {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::Index(e) => e.into(),
            e => internal(e),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Index(e) => e.into(),
            IngestError::Io { .. } => internal(e),
            e => user(e),
        }
    }
}

impl From<ClassifyError> for Failure {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Score(e) => e.into(),
            e => user(e),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Search(_) => internal(e),
            e => user(e),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        user(e)
    }
}

/// What a command prints: the JSON document, and the rows used for csv and
/// table output.
struct Output {
    json: Value,
    title: Option<String>,
    headers: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Output {
    fn new(json: Value, headers: Vec<&'static str>, rows: Vec<Vec<String>>) -> Self {
        Output {
            json,
            title: None,
            headers,
            rows,
        }
    }
}

fn emit(out: &Output, format: Format, w: &mut impl Write) -> io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *w, &out.json)?;
            writeln!(w)
        }
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(&out.headers)?;
            for r in &out.rows {
                csv.write_record(r)?;
            }
            csv.flush()
        }
        Format::Table => {
            if let Some(t) = &out.title {
                writeln!(w, "{t}")?;
            }
            let mut widths: Vec<usize> = out.headers.iter().map(|h| h.len()).collect();
            for r in &out.rows {
                for (i, c) in r.iter().enumerate() {
                    widths[i] = widths[i].max(c.chars().count());
                }
            }
            let line = |cells: Vec<&str>| {
                let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                padded.join("  ").trim_end().to_string()
            };
            writeln!(w, "{}", line(out.headers.clone()))?;
            for r in &out.rows {
                writeln!(w, "{}", line(r.iter().map(String::as_str).collect()))?;
            }
            Ok(())
        }
    }
}

fn to_json(v: &impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("output serializes")
}

fn read_model(path: &Path, model_type: Option<&str>) -> Result<Model, Failure> {
    let bytes = fs::read(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let format = ModelFormat::from_path(path).unwrap_or_else(|| ModelFormat::sniff(&bytes));
    let mut m = parse_model(&bytes, format).map_err(|e| user(format!("{}: {e}", path.display())))?;
    if let Some(t) = model_type {
        m.model_type = t.to_string();
    }
    if m.model_type.is_empty() {
        return Err(user(format!("{}: no model type; pass --type", path.display())));
    }
    Ok(m)
}

fn read_labels(path: &Path) -> Result<LabeledCorpus, Failure> {
    Ok(LabeledCorpus::from_csv_file(path)?)
}

fn read_config(path: &Path) -> Result<IndexConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn open_read(cli: &Cli) -> Result<Index, Failure> {
    Ok(Index::open_read_only(&cli.index)?)
}

/// Every indexed model of `model_type`, parsed back from its stored bytes.
fn load_models(index: &Index, model_type: &str) -> Result<Vec<(String, Model)>, Failure> {
    let reader = index.reader();
    let table = reader.table(model_type)?;
    let mut out = Vec::new();
    for id in table.model_ids()? {
        let stored = reader
            .model(&id)?
            .ok_or_else(|| internal(format!("model '{id}' is listed but missing")))?;
        let bytes = stored
            .source
            .ok_or_else(|| user(format!("model '{id}' was indexed without its source; re-index without --no-source")))?;
        let format = stored.meta.format.unwrap_or_else(|| ModelFormat::sniff(&bytes));
        let mut m = parse_model(&bytes, format).map_err(|e| internal(format!("stored model '{id}': {e}")))?;
        m.model_type = model_type.to_string();
        out.push((id, m));
    }
    Ok(out)
}

fn fmt_f(x: f64) -> String {
    format!("{x:.4}")
}

fn stats_rows(stats: &[pathmark_core::index::IndexStats]) -> (Vec<&'static str>, Vec<Vec<String>>) {
    (
        vec!["model_type", "t", "total_paths", "avdl", "stop_paths", "stop_path_threshold"],
        stats
            .iter()
            .map(|s| {
                vec![
                    s.model_type.clone(),
                    s.t.to_string(),
                    s.total_paths.to_string(),
                    fmt_f(s.avdl),
                    s.stop_paths.to_string(),
                    s.stop_path_threshold.to_string(),
                ]
            })
            .collect(),
    )
}

fn run(cli: &Cli) -> Result<Option<Output>, Failure> {
    match &cli.command {
        Command::Index {
            model_type,
            globs,
            no_source,
            batch_size,
            corpus,
        } => {
            let index = match &cli.config {
                Some(path) => Index::open_or_create(&cli.index, read_config(path)?)?,
                None if cli.index.join(META_FILE).exists() => Index::open(&cli.index)?,
                None => Index::create(&cli.index, IndexConfig::default())?,
            };
            let manifest = crawl_directory(corpus, model_type, globs)?;
            for s in &manifest.skipped {
                log::warn!("skipped {}: {}", s.path, s.reason);
            }
            let opts = IngestOptions {
                batch_size: *batch_size,
                keep_source: !no_source,
                ..IngestOptions::default()
            };
            let report = index_corpus(&index, &manifest, opts)?;
            for s in &report.skipped {
                log::warn!("skipped {}: {}", s.path, s.reason);
            }
            eprintln!(
                "indexed {} models in {:.0} ms ({} skipped)",
                report.indexed,
                report.elapsed_ms,
                report.skipped.len() + manifest.skipped.len()
            );
            let (headers, rows) = stats_rows(&report.stats);
            Ok(Some(Output::new(to_json(&report), headers, rows)))
        }
        Command::Search {
            model_type,
            max,
            explain,
            query,
        } => {
            if *max == 0 {
                return Err(user("--max must be at least 1"));
            }
            let index = open_read(cli)?;
            let q = read_model(query, model_type.as_deref())?;
            let out = search_model(&index, &q, &ScoringParams::default(), *max, *explain)?;
            let mut headers = vec!["rank", "id", "score"];
            let mut rows = Vec::new();
            for (i, r) in out.results.iter().enumerate() {
                let head = vec![(i + 1).to_string(), r.model_id.clone(), fmt_f(r.score)];
                match &r.matched_paths {
                    Some(paths) => {
                        for m in paths {
                            let mut row = head.clone();
                            row.push(m.path.to_string());
                            row.push(fmt_f(m.contribution));
                            rows.push(row);
                        }
                    }
                    None => rows.push(head),
                }
            }
            if *explain {
                headers.extend(["path", "contribution"]);
            }
            let json = to_json(&SearchResponse {
                model_type: q.model_type,
                results: out
                    .results
                    .into_iter()
                    .map(|r| SearchHit {
                        id: r.model_id,
                        score: r.score,
                        matched_paths: r.matched_paths,
                    })
                    .collect(),
                query: QueryStats {
                    paths: out.query_paths,
                    elapsed_ms: out.timing.total.as_secs_f64() * 1e3,
                },
            });
            Ok(Some(Output::new(json, headers, rows)))
        }
        Command::Classify {
            model_type,
            labels,
            k,
            query,
        } => {
            let labels = read_labels(labels)?;
            let index = open_read(cli)?;
            let q = read_model(query, model_type.as_deref())?;
            let result = classify(&index, &q, &labels, *k, &ScoringParams::default(), None)?;
            let rows = result
                .neighbors
                .iter()
                .map(|n| vec![n.id.clone(), fmt_f(n.score), n.label.clone()])
                .collect();
            let mut out = Output::new(to_json(&result), vec!["neighbor", "score", "label"], rows);
            out.title = Some(format!("label: {}", result.label));
            Ok(Some(out))
        }
        Command::Serve {
            listen,
            cors,
            labels,
            max_body,
        } => {
            let index = Arc::new(open_read(cli)?);
            let config = ServiceConfig {
                max_body: *max_body,
                cors_origins: cors.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                params: ScoringParams::default(),
                labels: labels.as_deref().map(read_labels).transpose()?,
            };
            let rt = tokio::runtime::Runtime::new().map_err(internal)?;
            rt.block_on(pathmark_service::serve(*listen, index, config))
                .map_err(|e| user(format!("{listen}: {e}")))?;
            Ok(None)
        }
        Command::Stats => {
            let index = open_read(cli)?;
            let reader = index.reader();
            let mut stats = Vec::new();
            for t in reader.model_types() {
                stats.push(reader.table(&t)?.stats()?);
            }
            let (headers, rows) = stats_rows(&stats);
            let json = json!({ "models": stats.iter().map(|s| s.t).sum::<u64>(), "model_types": stats });
            Ok(Some(Output::new(json, headers, rows)))
        }
        Command::Eval(cmd) => run_eval(cli, cmd),
    }
}

fn run_eval(cli: &Cli, cmd: &EvalCommand) -> Result<Option<Output>, Failure> {
    match cmd {
        EvalCommand::Mutate {
            model_type,
            out,
            radii,
            limit,
            seed,
            clusters,
        } => {
            let index = open_read(cli)?;
            let corpus = load_models(&index, model_type)?;
            let k = clusters.unwrap_or_else(|| MutationContext::default_k(corpus.len()));
            let ctx = MutationContext::build(&corpus, index.pipeline().normalizer(), k, *seed).map_err(user)?;
            let base = MutationConfig::default().with_seed(*seed);
            base.validate()?;
            let (mutants, rejected) = mutate_corpus(&corpus, &ctx, &base, radii, *limit);
            for (id, why) in &rejected {
                log::info!("no query from {id}: {why}");
            }
            write_mutants(out, &mutants)?;
            eprintln!("wrote {} queries to {} ({} models rejected)", mutants.len(), out.display(), rejected.len());
            let rows = mutants
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    vec![
                        format!("q{i:04}.json"),
                        m.origin.clone(),
                        m.radius.map(|r| r.to_string()).unwrap_or_default(),
                        m.seed.to_string(),
                        m.query.objects.len().to_string(),
                    ]
                })
                .collect();
            let json = json!({
                "out": out.display().to_string(),
                "queries": mutants.len(),
                "seed": seed,
                "clusters": k,
                "rejected": rejected.iter().map(|(id, e)| json!({ "id": id, "reason": e.to_string() })).collect::<Vec<_>>(),
            });
            Ok(Some(Output::new(json, vec!["file", "origin", "radius", "seed", "objects"], rows)))
        }
        EvalCommand::Mrr {
            queries,
            engine,
            model_type,
        } => {
            let mut mutants = read_mutants(queries)?;
            if mutants.is_empty() {
                return Err(user(format!("{}: no queries", queries.display())));
            }
            if let Some(t) = model_type {
                for m in &mut mutants {
                    m.query.model_type = t.clone();
                }
            }
            let index = open_read(cli)?;
            let params = ScoringParams::default();
            let query_set = queries.display().to_string();
            let report = match engine {
                Engine::Mar => evaluate_mrr(
                    &mutants,
                    |q| {
                        search_model(&index, q, &params, usize::MAX, false)
                            .map(|o| o.results)
                            .map_err(|e| EvalError::Search(e.to_string()))
                    },
                    engine.id(),
                    &query_set,
                )?,
                Engine::Text => {
                    let corpus = load_models(&index, &mutants[0].query.model_type)?;
                    let text = TextIndex::build(&corpus, index.pipeline().normalizer().clone(), TextParams::default());
                    evaluate_mrr(&mutants, |q| Ok(text.search(q, usize::MAX)), engine.id(), &query_set)?
                }
            };
            let manifest = cli.index.join(MANIFEST_FILE);
            let report = match CorpusManifest::read(&manifest) {
                Ok(m) => report.with_corpus_hash(m.corpus_hash()),
                Err(_) => report,
            };
            let rows = report
                .ranks
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    vec![
                        i.to_string(),
                        r.origin.clone(),
                        r.rank.map(|x| x.to_string()).unwrap_or_default(),
                        r.reciprocal().to_string(),
                    ]
                })
                .collect();
            let h = report.histogram;
            let mut out = Output::new(to_json(&report), vec!["query", "origin", "rank", "reciprocal_rank"], rows);
            if cli.format == Format::Table {
                out.title = Some(format!(
                    "engine {}  queries {}  mrr {:.4}  ranks 1:{} 2:{} 3:{} 4:{} >=5:{} (not found {})",
                    report.engine, report.queries, report.mrr, h.first, h.second, h.third, h.fourth, h.fifth_or_more, report.not_found
                ));
            }
            Ok(Some(out))
        }
        EvalCommand::Bench {
            model_type,
            queries,
            sizes,
            max,
        } => {
            let index = open_read(cli)?;
            let corpus = load_models(&index, model_type)?;
            let qs: Vec<Model> = read_mutants(queries)?
                .into_iter()
                .map(|mut m| {
                    m.query.model_type = model_type.clone();
                    m.query
                })
                .collect();
            let rows = benchmark_latency(&corpus, sizes, &qs, &ScoringParams::default(), *max)?;
            let mut table = Vec::new();
            for r in &rows {
                for (phase, s) in [("paths", r.paths), ("get", r.get), ("score", r.score), ("total", r.total)] {
                    table.push(vec![
                        r.index_size.to_string(),
                        r.bucket.as_str().to_string(),
                        phase.to_string(),
                        fmt_f(s.mean_ms),
                        fmt_f(s.max_ms),
                    ]);
                }
            }
            Ok(Some(Output::new(
                to_json(&rows),
                vec!["index_size", "bucket", "phase", "mean_ms", "max_ms"],
                table,
            )))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(Some(out)) => {
            let stdout = io::stdout();
            match emit(&out, cli.format, &mut stdout.lock()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
