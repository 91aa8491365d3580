use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use proqe::dense::{HashedBowEncoder, Similarity, DEFAULT_DIM};
use proqe::eval::{evaluate, evaluate_run, MetricsReport};
use proqe::fixture::{FixtureConfig, SyntheticFixture};
use proqe::llm::{ChatClient, ChatClientConfig, LanguageModel, OracleLlm, PromptSet};
use proqe::pipeline::{run_dense, run_sparse, sweep_iterations, write_sweep_csv};
use proqe::{
    Bm25Params, Corpus, InvertedIndex, Method, QrelSet, QueryRecord, RunConfig, RunOutput, Tokenizer,
    TokenizerConfig, VectorIndex,
};
use tracing::{info, warn};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "proqe", version, about = "Progressive query expansion over cost-metered retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and save a BM25 index.
    Index(IndexArgs),
    /// Encode a corpus with the hashed bag-of-words encoder and write a vector file.
    Encode(EncodeArgs),
    /// Run one retrieval method over a query set.
    Run(RunArgs),
    /// Score a TREC run file against qrels.
    Eval(EvalArgs),
    /// Rerun ProQE for several iteration counts and tabulate the results.
    Sweep(SweepArgs),
    /// Write a seeded synthetic collection (corpus, queries, qrels).
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct TokenizerArgs {
    /// Porter-stem tokens.
    #[arg(long)]
    stem: bool,
    /// Stopword list, one word per line (default: the 33-word English list).
    #[arg(long, value_name = "PATH")]
    stopwords: Option<PathBuf>,
}

impl TokenizerArgs {
    fn tokenizer(&self) -> Result<Tokenizer> {
        let mut config = TokenizerConfig::default().with_stem(self.stem);
        if let Some(path) = &self.stopwords {
            config = config.with_stopword_file(path)?;
        }
        Ok(Tokenizer::new(config))
    }
}

#[derive(Args, Clone)]
struct Bm25Args {
    #[arg(long, default_value_t = 0.9)]
    k1: f64,
    #[arg(long, default_value_t = 0.4)]
    b: f64,
}

#[derive(Args)]
struct IndexArgs {
    /// Corpus as JSONL with `doc_id` and `text`.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
    #[command(flatten)]
    bm25: Bm25Args,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum LlmKind {
    /// Answers from the qrels and corpus (needs --qrels).
    Oracle,
    /// OpenAI-compatible chat-completions endpoint (PROQE_LLM_ENDPOINT,
    /// PROQE_LLM_API_KEY, PROQE_LLM_MODEL).
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimilarityArg {
    Dot,
    Cosine,
}

impl From<SimilarityArg> for Similarity {
    fn from(s: SimilarityArg) -> Self {
        match s {
            SimilarityArg::Dot => Similarity::Dot,
            SimilarityArg::Cosine => Similarity::Cosine,
        }
    }
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Queries as TSV: `<query_id>\t<text>`.
    #[arg(long)]
    queries: PathBuf,
    /// TREC qrels; required by the oracle model and for the metric summary.
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Minimum grade that counts as relevant.
    #[arg(long, default_value_t = 1)]
    threshold: u32,
    /// Prebuilt index from `proqe index` (tokenizer and BM25 flags are then ignored).
    #[arg(long)]
    index: Option<PathBuf>,
    /// Vector file for dense methods (default: encode the corpus on the fly).
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Ranking depth and MRR cutoff.
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    unit_cost: f64,
    /// Worker threads over queries (0: all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,

    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,

    #[arg(long, default_value_t = 10)]
    rm3_fb_docs: usize,
    #[arg(long, default_value_t = 10)]
    rm3_fb_terms: usize,
    #[arg(long, default_value_t = 0.5)]
    rm3_query_weight: f64,
    #[arg(long, default_value_t = 3)]
    rocchio_fb_docs: usize,
    #[arg(long, default_value_t = 5)]
    rocchio_fb_terms: usize,
    #[arg(long, default_value_t = 1.0)]
    rocchio_a: f64,
    #[arg(long, default_value_t = 0.75)]
    rocchio_b: f64,
    #[arg(long, default_value_t = 0.0)]
    rocchio_c: f64,

    #[arg(long, default_value_t = 0.8)]
    sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    #[arg(long, value_enum, default_value = "dot")]
    similarity: SimilarityArg,
    /// Average only positively weighted terms into the dense query.
    #[arg(long)]
    dense_positive_only: bool,

    #[arg(long, value_enum, default_value = "oracle")]
    llm: LlmKind,
    /// Append every model request and response to this JSONL file.
    #[arg(long)]
    llm_log: Option<PathBuf>,
    /// Persistent response cache (JSONL).
    #[arg(long)]
    llm_cache: Option<PathBuf>,
    /// Directory overriding the built-in prompt templates.
    #[arg(long)]
    prompts_dir: Option<PathBuf>,
    /// Truncation of the oracle's chain-of-thought text, in characters.
    #[arg(long, default_value_t = proqe::llm::DEFAULT_COT_MAX_CHARS)]
    oracle_cot_chars: usize,

    #[command(flatten)]
    tokenizer: TokenizerArgs,
    #[command(flatten)]
    bm25: Bm25Args,
}

impl ExperimentArgs {
    fn config(&self, method: Method) -> RunConfig {
        let mut c = RunConfig::new(method);
        c.depth = self.k;
        c.unit_cost = self.unit_cost;
        c.threads = self.threads;
        c.proqe.n_iterations = self.n;
        c.proqe.m_terms = self.m;
        c.proqe.alpha = self.alpha;
        c.proqe.beta = self.beta;
        c.proqe.gamma = self.gamma;
        c.rm3.fb_docs = self.rm3_fb_docs;
        c.rm3.fb_terms = self.rm3_fb_terms;
        c.rm3.query_weight = self.rm3_query_weight;
        c.rocchio.fb_docs = self.rocchio_fb_docs;
        c.rocchio.fb_terms = self.rocchio_fb_terms;
        c.rocchio.a = self.rocchio_a;
        c.rocchio.b = self.rocchio_b;
        c.rocchio.c = self.rocchio_c;
        c.dense.sigma = self.sigma;
        c.dense.tau = self.tau;
        c.dense.delta = self.delta;
        c.dense.positive_only = self.dense_positive_only;
        c
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// TREC run file to write.
    #[arg(long)]
    out: PathBuf,
    /// Per-query JSON trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Cost report as JSON.
    #[arg(long)]
    cost_report: Option<PathBuf>,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// MRR cutoff.
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    threshold: u32,
    /// Recall cutoffs (default: 1 and k).
    #[arg(long, value_delimiter = ',')]
    recall_at: Vec<usize>,
    /// Write the full report (with per-query values) as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_method, default_value = "proqe")]
    method: Method,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,10,15")]
    n_values: Vec<usize>,
    /// CSV output (default: stdout).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 25)]
    topics: usize,
    #[arg(long, default_value_t = 200)]
    docs: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: proqe::Error| e.to_string())
}

/// Everything a run needs, loaded once.
struct Loaded {
    corpus: Corpus,
    queries: Vec<QueryRecord>,
    qrels: Option<QrelSet>,
    index: InvertedIndex,
}

fn load(exp: &ExperimentArgs) -> Result<Loaded> {
    let (corpus, stats) = Corpus::ingest(&exp.corpus)?;
    info!(docs = stats.docs, "corpus loaded");
    let queries = proqe::corpus::load_queries(&exp.queries)?;
    let qrels = exp
        .qrels
        .as_ref()
        .map(|p| QrelSet::load(p, exp.threshold))
        .transpose()?;
    if let Some(q) = &qrels {
        let unknown = q.unknown_doc_ids(&corpus);
        if !unknown.is_empty() {
            warn!(count = unknown.len(), "qrels reference documents missing from the corpus");
        }
    }
    let index = match &exp.index {
        Some(path) => InvertedIndex::load(path)?,
        None => InvertedIndex::build(
            &corpus,
            exp.tokenizer.tokenizer()?,
            Bm25Params {
                k1: exp.bm25.k1,
                b: exp.bm25.b,
            },
        )?,
    };
    Ok(Loaded {
        corpus,
        queries,
        qrels,
        index,
    })
}

fn execute(exp: &ExperimentArgs, data: &Loaded, config: &RunConfig) -> Result<RunOutput> {
    let empty = QrelSet::new(exp.threshold);
    let llm: Box<dyn LanguageModel + '_> = match exp.llm {
        LlmKind::Oracle => {
            let qrels = match (&data.qrels, config.method.uses_llm()) {
                (Some(q), _) => q,
                (None, false) => &empty,
                (None, true) => bail!("--llm oracle needs --qrels"),
            };
            Box::new(OracleLlm::new(qrels, &data.index, &data.corpus).with_cot_max_chars(exp.oracle_cot_chars))
        }
        LlmKind::Http => {
            let prompts = match &exp.prompts_dir {
                Some(dir) => PromptSet::from_dir(dir)?,
                None => PromptSet::builtin(),
            };
            let mut cfg = ChatClientConfig::from_env();
            cfg.log_path = exp.llm_log.clone();
            cfg.cache_path = exp.llm_cache.clone();
            Box::new(ChatClient::new(cfg, prompts)?)
        }
    };

    let out = if config.method.is_dense() {
        let encoder = HashedBowEncoder::new(exp.dim, data.index.tokenizer().clone());
        let vindex = match &exp.vectors {
            Some(path) => VectorIndex::load(path, exp.similarity.into())?,
            None => VectorIndex::build(&data.corpus, &encoder, exp.similarity.into())?,
        };
        run_dense(
            &data.queries,
            &data.corpus,
            &vindex,
            &encoder,
            data.index.tokenizer(),
            llm.as_ref(),
            config,
        )?
    } else {
        run_sparse(&data.queries, &data.corpus, &data.index, llm.as_ref(), config)?
    };
    for t in out.failures() {
        warn!(query = %t.query_id, error = t.error.as_deref().unwrap_or(""), "query failed");
    }
    Ok(out)
}

fn print_metrics(report: &MetricsReport, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "queries\t{}", report.num_queries)?;
    writeln!(out, "MRR@{}\t{:.4}", report.mrr_cutoff, report.mrr)?;
    for (k, r) in &report.recall {
        writeln!(out, "R@{k}\t{r:.4}")?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let data = load(&args.exp)?;
    let config = args.exp.config(args.method);
    let out = execute(&args.exp, &data, &config)?;
    out.run
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.trace {
        out.write_traces(path)?;
    }
    if let Some(path) = &args.cost_report {
        out.cost.write_json(path)?;
    }
    let stderr = &mut io::stderr().lock();
    writeln!(
        stderr,
        "{}: {} queries, {} failed, total charge {:.4}",
        args.method,
        data.queries.len(),
        out.failures().count(),
        out.cost.total_charge
    )?;
    if let Some(qrels) = &data.qrels {
        print_metrics(&evaluate(&out.run, qrels, config.depth, &[1, config.depth]), stderr)?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut ks = args.recall_at.clone();
    if ks.is_empty() {
        ks = vec![1, args.k];
    }
    if ks.contains(&0) || args.k == 0 {
        bail!("cutoffs must be at least 1");
    }
    let report = evaluate_run(&args.run, &args.qrels, args.threshold, args.k, &ks)?;
    print_metrics(&report, &mut io::stdout().lock())?;
    if let Some(path) = &args.json {
        report.write_json(path)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    if !matches!(args.method, Method::Proqe | Method::ProqeDense) {
        bail!("sweeps vary the iteration count; use proqe or proqe-dense");
    }
    let data = load(&args.exp)?;
    let Some(qrels) = &data.qrels else {
        bail!("sweep needs --qrels");
    };
    let base = args.exp.config(args.method);
    let rows = sweep_iterations(&base, &args.n_values, qrels, args.exp.k, |c| {
        execute(&args.exp, &data, c).map_err(|e| proqe::Error::InvalidArgument(format!("{e:#}")))
    })?;
    match &args.csv {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_sweep_csv(&rows, BufWriter::new(file))?;
        }
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_index(args: IndexArgs) -> Result<()> {
    let (corpus, _) = Corpus::ingest(&args.corpus)?;
    let index = InvertedIndex::build(
        &corpus,
        args.tokenizer.tokenizer()?,
        Bm25Params {
            k1: args.bm25.k1,
            b: args.bm25.b,
        },
    )?;
    index.save(&args.out)?;
    eprintln!(
        "indexed {} documents, {} terms",
        index.doc_count(),
        index.vocabulary_len()
    );
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> Result<()> {
    if args.dim == 0 {
        bail!("--dim must be positive");
    }
    let (corpus, _) = Corpus::ingest(&args.corpus)?;
    let encoder = HashedBowEncoder::new(args.dim, args.tokenizer.tokenizer()?);
    let vindex = VectorIndex::build(&corpus, &encoder, Similarity::Dot)?;
    vindex.save(&args.out)?;
    eprintln!("encoded {} documents at d={}", vindex.len(), vindex.dim());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let fixture = SyntheticFixture::generate(&FixtureConfig {
        seed: args.seed,
        topics: args.topics,
        docs: args.docs,
        ..FixtureConfig::default()
    })?;
    fixture.write_to_dir(&args.out_dir)?;
    eprintln!(
        "wrote {} documents, {} queries to {}",
        fixture.corpus.len(),
        fixture.queries.len(),
        display(&args.out_dir)
    );
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::Index(a) => cmd_index(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}
