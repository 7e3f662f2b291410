//! Command-line driver: corpus validation, graph building, single queries,
//! evaluation, k sweeps, node inspection and fixture generation.

pub mod config;
pub mod error;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use lexgraph::corpus::{
    ingest_corpus, ingest_str, validate_references, CaseDocument, CorpusBundle, CorpusSources,
    DocumentKind, IngestOptions,
};
use lexgraph::embedding::{
    EmbeddingProvider, HashingEmbedder, RemoteEmbedder, RemoteEmbedderConfig,
};
use lexgraph::evaluation::{build_report, render_report, render_sweep, sweep_k, SweepRow};
use lexgraph::fixture;
use lexgraph::graph::{self, build_hierargraph, BuildManifest, HierarGraph};
use lexgraph::llm::{
    ChatBackend, Gateway, HttpBackendConfig, HttpChatBackend, Script, ScriptedBackend, TokenSummary,
};
use lexgraph::pipeline::{evaluate_cases, run_query, EvaluationRun, PipelineConfig};
use lexgraph::retry::RetryPolicy;
use serde::Serialize;
use serde_json::json;

pub use config::{BackendKind, EmbeddingKind, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "lexgraph",
    version,
    about = "Graph-based retrieval and verified judgment prediction"
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Every flag overrides the matching config file entry.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML config file supplying defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding cases.jsonl, articles.jsonl and interpretations.jsonl.
    #[arg(long, global = true)]
    pub corpus_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cases: Option<PathBuf>,
    #[arg(long, global = true)]
    pub articles: Option<PathBuf>,
    #[arg(long, global = true)]
    pub interpretations: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test_cases: Option<PathBuf>,
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Replay file for the scripted backend.
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Environment variable to read the chat API key from.
    #[arg(long, global = true)]
    pub api_key_env: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub embedding: Option<EmbeddingKind>,
    #[arg(long, global = true)]
    pub embedding_dim: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub knn_k: Option<usize>,
    #[arg(long, global = true)]
    pub max_blocks: Option<usize>,
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub rng_seed: Option<u64>,
    /// Reject records with dangling references.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the corpus files and print a report.
    Ingest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the graph and write it to the graph path.
    Build,
    /// Run one case description through the full pipeline.
    Query {
        #[arg(
            long,
            conflicts_with = "fact_file",
            required_unless_present = "fact_file"
        )]
        fact: Option<String>,
        #[arg(long)]
        fact_file: Option<PathBuf>,
        #[arg(long = "defendant")]
        defendants: Vec<String>,
        /// Print the whole run (retrieval, audit, context) as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Score the test cases; writes report.json, report.txt, predictions.jsonl and retrieval.jsonl.
    Evaluate {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate once per retrieval depth.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [3, 4, 5, 6])]
        ks: Vec<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Dump a node with its edges, checklist and community.
    Inspect { node_id: String },
    /// Write the synthetic fixture corpus, a replay script and a config file.
    GenFixture {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = fixture::DEFAULT_SEED)]
        seed: u64,
    },
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &self.corpus_dir {
            let s = CorpusSources::in_dir(dir);
            c.corpus.cases = s.cases;
            c.corpus.articles = s.articles;
            c.corpus.interpretations = s.interpretations;
        }
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v.into();
                }
            };
        }
        set!(self.cases => c.corpus.cases);
        set!(self.articles => c.corpus.articles);
        set!(self.interpretations => c.corpus.interpretations);
        set!(self.test_cases => c.test_cases);
        set!(self.graph => c.graph);
        set!(self.backend => c.backend.kind);
        set!(self.script => c.backend.script);
        set!(self.endpoint => c.backend.endpoint);
        set!(self.model => c.backend.model);
        set!(self.api_key_env => c.backend.api_key_env);
        set!(self.embedding => c.embedding.kind);
        set!(self.embedding_dim => c.embedding.dimension);
        set!(self.k => c.k);
        set!(self.knn_k => c.knn_k);
        set!(self.max_blocks => c.max_blocks);
        set!(self.max_in_flight => c.backend.max_in_flight);
        set!(self.threads => c.threads);
        set!(self.rng_seed => c.rng_seed);
        c.strict |= self.strict;
        if c.k == 0 || c.knn_k == 0 {
            return Err(CliError::Usage("k and knn_k must be positive".into()));
        }
        Ok(c)
    }
}

fn api_key(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|k| !k.is_empty())
}

pub fn make_gateway(config: &RunConfig) -> Result<Gateway, CliError> {
    let b = &config.backend;
    let backend: Arc<dyn ChatBackend> = match b.kind {
        BackendKind::Scripted => {
            let path = b
                .script
                .as_deref()
                .ok_or_else(|| CliError::Usage("scripted backend needs a script file".into()))?;
            Arc::new(ScriptedBackend::new(
                Script::load(path).map_err(|e| CliError::Data(e.to_string()))?,
            ))
        }
        BackendKind::Http => {
            let need = |v: &Option<String>, what: &str| {
                v.clone()
                    .ok_or_else(|| CliError::Usage(format!("http backend needs {what}")))
            };
            let key = api_key(&b.api_key_env);
            if key.is_none() {
                log::warn!(
                    "{} is not set; calling the endpoint without credentials",
                    b.api_key_env
                );
            }
            Arc::new(HttpChatBackend::new(
                HttpBackendConfig {
                    endpoint: need(&b.endpoint, "an endpoint")?,
                    model: need(&b.model, "a model")?,
                    timeout_secs: b.timeout_secs,
                },
                key,
            ))
        }
    };
    Ok(Gateway::new(backend)
        .with_retry(RetryPolicy {
            max_retries: b.max_retries,
            base_delay_ms: b.retry_base_delay_ms,
        })
        .with_max_in_flight(b.max_in_flight))
}

pub fn make_provider(config: &RunConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    let e = &config.embedding;
    match e.kind {
        EmbeddingKind::Hashing => {
            if e.dimension == 0 {
                return Err(CliError::Usage(
                    "embedding dimension must be positive".into(),
                ));
            }
            Ok(Box::new(HashingEmbedder::new(e.dimension)))
        }
        EmbeddingKind::Remote => {
            let need = |v: &Option<String>, what: &str| {
                v.clone()
                    .ok_or_else(|| CliError::Usage(format!("remote embedding needs {what}")))
            };
            Ok(Box::new(RemoteEmbedder::new(
                RemoteEmbedderConfig {
                    endpoint: need(&e.endpoint, "an endpoint")?,
                    model: need(&e.model, "a model")?,
                    dimension: Some(e.dimension),
                    timeout_secs: e.timeout_secs,
                    retry: RetryPolicy::default(),
                },
                api_key(&e.api_key_env),
            )))
        }
    }
}

fn load_corpus(config: &RunConfig) -> Result<CorpusBundle, CliError> {
    let sources = config.corpus_sources()?;
    let (bundle, report) = ingest_corpus(
        &sources,
        IngestOptions {
            strict: config.strict,
        },
    )?;
    if let Some(first) = report.errors.first() {
        return Err(CliError::Data(format!(
            "{} invalid corpus record(s); first: {}",
            report.errors.len(),
            first
        )));
    }
    Ok(bundle)
}

fn load_test_cases(config: &RunConfig) -> Result<Vec<CaseDocument>, CliError> {
    let path = config
        .test_cases
        .as_deref()
        .ok_or_else(|| CliError::Usage("no test cases file configured".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let (bundle, report) = ingest_str(&text, "", "", IngestOptions { strict: false });
    if let Some(first) = report.errors.first() {
        return Err(CliError::Data(format!("test cases: {first}")));
    }
    if bundle.cases.is_empty() {
        return Err(CliError::Data(format!("{} holds no cases", path.display())));
    }
    Ok(bundle.cases)
}

/// Loads the persisted graph and refuses one built with a different embedder.
pub fn load_graph(
    config: &RunConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<HierarGraph, CliError> {
    let g = graph::load(config.graph_path()?)?;
    let m = &g.manifest;
    if m.embedding_provider != provider.name()
        || (m.embedding_dimension.is_some() && m.embedding_dimension != provider.dimension())
    {
        return Err(CliError::Data(format!(
            "graph was built with embedding {} (dimension {:?}); configured {} (dimension {:?})",
            m.embedding_provider,
            m.embedding_dimension,
            provider.name(),
            provider.dimension()
        )));
    }
    Ok(g)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("value serializes") + "\n")
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct Provenance<'a> {
    config: &'a RunConfig,
    manifest: &'a BuildManifest,
}

fn cmd_ingest(
    config: &RunConfig,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let sources = config.corpus_sources()?;
    let (bundle, report) = ingest_corpus(
        &sources,
        IngestOptions {
            strict: config.strict,
        },
    )?;
    let body = pretty(&json!({
        "counts": bundle.counts(),
        "fingerprint": bundle.fingerprint(),
        "report": report,
        "references": validate_references(&bundle),
    }));
    match out {
        Some(p) => write_file(p, &body)?,
        None => stdout.write_all(body.as_bytes())?,
    }
    if !report.is_clean() {
        return Err(CliError::Data(format!(
            "{} invalid corpus record(s)",
            report.errors.len()
        )));
    }
    Ok(())
}

fn cmd_build(config: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let path = config.graph_path()?.to_owned();
    let bundle = load_corpus(config)?;
    let gw = make_gateway(config)?;
    let provider = make_provider(config)?;
    let g = build_hierargraph(&bundle, &gw, provider.as_ref(), &config.build())?;
    graph::persist(&g, &path)?;
    let usage = TokenSummary::from(&gw.ledger().summary());
    stdout.write_all(
        pretty(&json!({
            "graph": path,
            "manifest": g.manifest,
            "communities": g.ontology.communities.len(),
            "modularity": g.ontology.modularity,
            "usage": usage,
        }))
        .as_bytes(),
    )?;
    Ok(())
}

fn cmd_query(
    config: &RunConfig,
    fact: &str,
    defendants: &[String],
    as_json: bool,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let provider = make_provider(config)?;
    let g = load_graph(config, provider.as_ref())?;
    let gw = make_gateway(config)?;
    let outcome = run_query(
        &gw,
        provider.as_ref(),
        &g,
        fact,
        defendants,
        &config.pipeline(),
    )?;
    if as_json {
        stdout.write_all(pretty(&outcome).as_bytes())?;
        return Ok(());
    }
    let j = &outcome.judgment;
    let mut out = pretty(&json!({
        "charges": j.charges,
        "articles": j.articles,
        "term": j.term,
        "traceability": j.traceability,
        "context_free": j.context_free,
        "structured_failed": j.structured_failed,
    }));
    out.push_str("\nVerdict:\n");
    out.push_str(&j.verdict_text);
    out.push_str("\n\nCitations:\n");
    for n in &j.citations {
        let b = &outcome.context.blocks[n - 1];
        out.push_str(&format!("[{n}] {}\n", b.node_id));
    }
    if j.citations.is_empty() {
        out.push_str("(none)\n");
    }
    stdout.write_all(out.as_bytes())?;
    Ok(())
}

fn evaluate_at(
    config: &RunConfig,
    gw: &Gateway,
    provider: &dyn EmbeddingProvider,
    g: &HierarGraph,
    cases: &[CaseDocument],
    k: usize,
) -> Result<EvaluationRun, CliError> {
    let mut pipeline: PipelineConfig = config.pipeline();
    pipeline.research.k = k;
    Ok(evaluate_cases(gw, provider, g, cases, &pipeline)?)
}

fn cmd_evaluate(
    config: &RunConfig,
    out_dir: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let cases = load_test_cases(config)?;
    let provider = make_provider(config)?;
    let g = load_graph(config, provider.as_ref())?;
    let gw = make_gateway(config)?;
    let run = evaluate_at(config, &gw, provider.as_ref(), &g, &cases, config.k)?;
    let metrics = build_report(&run.records, &run.judgments)?;
    let text = render_report(&metrics);
    create_dir(out_dir)?;
    write_file(&out_dir.join("predictions.jsonl"), &jsonl(&run.records))?;
    write_file(&out_dir.join("retrieval.jsonl"), &jsonl(&run.judgments))?;
    write_file(
        &out_dir.join("report.json"),
        &pretty(&json!({
            "provenance": Provenance { config, manifest: &g.manifest },
            "metrics": metrics,
            "usage": TokenSummary::from(&gw.ledger().summary()),
        })),
    )?;
    write_file(&out_dir.join("report.txt"), &text)?;
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

fn cmd_sweep(
    config: &RunConfig,
    ks: &[usize],
    out_dir: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::Usage(
            "ks must be a non-empty list of positive integers".into(),
        ));
    }
    let cases = load_test_cases(config)?;
    let provider = make_provider(config)?;
    let g = load_graph(config, provider.as_ref())?;
    let gw = make_gateway(config)?;
    let rows: Vec<SweepRow> = sweep_k(ks, |k| {
        evaluate_at(config, &gw, provider.as_ref(), &g, &cases, k).map(|r| r.records)
    })?;
    let text = render_sweep(&rows);
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_file(
            &dir.join("sweep.json"),
            &pretty(&json!({
                "provenance": Provenance { config, manifest: &g.manifest },
                "rows": rows,
            })),
        )?;
        write_file(&dir.join("sweep.txt"), &text)?;
    }
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

/// JSON description of one node and everything attached to it.
pub fn inspect_node(g: &HierarGraph, id: &str) -> Option<serde_json::Value> {
    if let Some(a) = g.article(id) {
        let cases: Vec<&str> = g
            .fact
            .edges_case_article
            .iter()
            .filter(|(_, art)| art == id)
            .map(|(c, _)| c.as_str())
            .collect();
        let interps: Vec<&str> = g
            .rule
            .interpretations_of(id)
            .iter()
            .map(|j| j.interpretation_id.as_str())
            .collect();
        return Some(json!({
            "kind": "article",
            "node": a,
            "cited_by": cases,
            "interpretations": interps,
            "checklist": g.rule.checklists.get(id),
        }));
    }
    if let Some(c) = g.case(id) {
        let community = g
            .ontology
            .membership
            .get(id)
            .and_then(|k| g.ontology.communities.get(k));
        return Some(json!({
            "kind": "case",
            "node": c,
            "articles": g.fact.cited_articles(id).collect::<Vec<_>>(),
            "offenses": c.charge_labels,
            "features": g.ontology.feature_index.get(id),
            "embedding_source": g.ontology.embedding_source.get(id),
            "knn_neighbors": g.ontology.neighbors(id),
            "community": community.map(|k| json!({"id": k.community_id, "summary": k.summary_text})),
        }));
    }
    if let Some(o) = g.fact.offense_nodes.get(id) {
        return Some(json!({ "kind": "offense", "node": o }));
    }
    if let Some(j) = g.rule.interpretation_nodes.get(id) {
        let articles: Vec<&str> = g
            .rule
            .edges_article_interp
            .iter()
            .filter(|(_, i)| i == id)
            .map(|(a, _)| a.as_str())
            .collect();
        return Some(json!({ "kind": "interpretation", "node": j, "articles": articles }));
    }
    g.ontology.communities.get(id).map(|k| {
        json!({
            "kind": "community",
            "community_id": k.community_id,
            "members": k.member_case_ids,
            "summary": k.summary_text,
            "summary_fallback": k.summary_fallback,
        })
    })
}

fn cmd_inspect(config: &RunConfig, node_id: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    let g = graph::load(config.graph_path()?)?;
    let dump = inspect_node(&g, node_id)
        .ok_or_else(|| CliError::Data(format!("no node with id {node_id}")))?;
    stdout.write_all(pretty(&dump).as_bytes())?;
    Ok(())
}

pub const SWEEP_KS: [usize; 4] = [3, 4, 5, 6];

fn cmd_gen_fixture(
    config: &RunConfig,
    out_dir: &Path,
    seed: u64,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    create_dir(out_dir)?;
    let f = fixture::generate(seed);
    f.bundle.write_to(&CorpusSources::in_dir(out_dir))?;
    let tests = CorpusBundle {
        cases: f.test_cases.clone(),
        ..Default::default()
    };
    write_file(
        &out_dir.join("test_cases.jsonl"),
        &tests.to_jsonl(DocumentKind::Case),
    )?;
    let provider = make_provider(config)?;
    let (script, _) = fixture::record_script(
        &f,
        provider.as_ref(),
        &config.build(),
        &config.pipeline(),
        &SWEEP_KS,
    )?;
    write_file(&out_dir.join("script.json"), &script.to_json())?;

    let mut fixture_config = config.clone();
    fixture_config.corpus = config::CorpusPaths {
        cases: Some("cases.jsonl".into()),
        articles: Some("articles.jsonl".into()),
        interpretations: Some("interpretations.jsonl".into()),
    };
    fixture_config.test_cases = Some("test_cases.jsonl".into());
    fixture_config.graph = Some("graph.json".into());
    fixture_config.backend.kind = BackendKind::Scripted;
    fixture_config.backend.script = Some("script.json".into());
    write_file(&out_dir.join("lexgraph.toml"), &fixture_config.to_toml())?;

    let counts = f.bundle.counts();
    writeln!(
        stdout,
        "wrote {} cases, {} articles, {} interpretations, {} test cases and {} scripted responses to {}",
        counts.cases,
        counts.articles,
        counts.interpretations,
        f.test_cases.len(),
        script.len(),
        out_dir.display()
    )?;
    Ok(())
}

fn dispatch(cli: &Cli, config: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest { out } => {
            config.check_inputs(&[
                &config.corpus.cases,
                &config.corpus.articles,
                &config.corpus.interpretations,
            ])?;
            cmd_ingest(config, out.as_deref(), stdout)
        }
        Command::Build => {
            config.check_inputs(&[
                &config.corpus.cases,
                &config.corpus.articles,
                &config.corpus.interpretations,
                &config.backend.script,
            ])?;
            cmd_build(config, stdout)
        }
        Command::Query {
            fact,
            fact_file,
            defendants,
            json,
        } => {
            config.check_inputs(&[&config.graph, &config.backend.script])?;
            let text = match (fact, fact_file) {
                (Some(t), _) => t.clone(),
                (None, Some(p)) => std::fs::read_to_string(p)
                    .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?,
                (None, None) => return Err(CliError::Usage("give --fact or --fact-file".into())),
            };
            if text.trim().is_empty() {
                return Err(CliError::Usage("the fact text is empty".into()));
            }
            cmd_query(config, text.trim(), defendants, *json, stdout)
        }
        Command::Evaluate { out_dir } => {
            config.check_inputs(&[&config.graph, &config.test_cases, &config.backend.script])?;
            cmd_evaluate(config, out_dir, stdout)
        }
        Command::Sweep { ks, out_dir } => {
            config.check_inputs(&[&config.graph, &config.test_cases, &config.backend.script])?;
            cmd_sweep(config, ks, out_dir.as_deref(), stdout)
        }
        Command::Inspect { node_id } => {
            config.check_inputs(&[&config.graph])?;
            cmd_inspect(config, node_id, stdout)
        }
        Command::GenFixture { out_dir, seed } => cmd_gen_fixture(config, out_dir, *seed, stdout),
    }
}

/// Runs a parsed command line, writing results to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = cli.overrides.resolve()?;
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
        let mut buf: Vec<u8> = Vec::new();
        let result = pool.install(|| dispatch(cli, &config, &mut buf));
        stdout.write_all(&buf)?;
        result
    } else {
        dispatch(cli, &config, stdout)
    }
}

/// Parses `args` and runs; returns the process exit code. Errors go to
/// `stderr` as one JSON line.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_owned());
            let _ = writeln!(stderr, "{}", err.to_json_line());
            return err.exit_code();
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_json_line());
            e.exit_code()
        }
    }
}

/// Sorted node ids by kind, for listings.
pub fn node_index(g: &HierarGraph) -> BTreeMap<&'static str, Vec<&str>> {
    BTreeMap::from([
        (
            "articles",
            g.fact.article_nodes.keys().map(String::as_str).collect(),
        ),
        (
            "cases",
            g.fact.case_nodes.keys().map(String::as_str).collect(),
        ),
        (
            "offenses",
            g.fact.offense_nodes.keys().map(String::as_str).collect(),
        ),
        (
            "interpretations",
            g.rule
                .interpretation_nodes
                .keys()
                .map(String::as_str)
                .collect(),
        ),
        (
            "communities",
            g.ontology.communities.keys().map(String::as_str).collect(),
        ),
    ])
}
