mod commands;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hintrank::{Classify, ErrorClass};

#[derive(Parser)]
#[command(
    name = "hintrank",
    version,
    about = "Hint-augmented ranking for superlative product queries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index snapshot from a product file.
    Index(IndexArgs),
    /// Generate hints for every query into the hint cache.
    Hints(HintsArgs),
    /// First-stage retrieval only; writes a run file.
    Retrieve(RunArgs),
    /// Rerank the candidates of an existing run file.
    Rerank(RerankArgs),
    /// Retrieval, hints and reranking end to end.
    Pipeline(PipelineArgs),
    /// Score a run file against relevance judgments.
    Eval(EvalArgs),
    /// Recall of the union of query-variant pools at several depths.
    Coverage(CoverageArgs),
    /// Per-query latency of a configured pipeline.
    Bench(BenchArgs),
    /// Write a small synthetic dataset with a ready-to-run config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IndexArgs {
    /// Product file (JSON lines).
    #[arg(long)]
    products: PathBuf,
    /// Where to write the snapshot.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "title-description")]
    fields: Fields,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fields {
    TitleDescription,
    TitleOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum Retriever {
    Bm25,
    QeBm25,
    Dense,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reranker {
    None,
    Pointwise,
    Listwise,
}

/// Settings shared by every command that builds a pipeline.
#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Query file; overrides paths.queries.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Product file; overrides paths.products.
    #[arg(long)]
    products: Option<PathBuf>,
    #[arg(long, value_enum)]
    retriever: Option<Retriever>,
    #[arg(long, value_enum)]
    reranker: Option<Reranker>,
    /// Candidates per query; overrides pipeline.k.
    #[arg(long)]
    k: Option<usize>,
    /// Worker threads; overrides pipeline.worker_count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct HintsArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Hint cache file; overrides paths.hints_cache.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run file to write; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RerankArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run file holding the candidates.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write the full run artifact (config, rankings, latencies, failures) as JSON.
    #[arg(long)]
    artifact: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run file to score.
    #[arg(long, required = true, num_args = 1..)]
    run: Vec<PathBuf>,
    #[arg(long)]
    judgments: PathBuf,
    /// Query file; needed for --group-by parent_category.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Labels counted as positive: comma-separated rb, rnb, irr.
    #[arg(long, default_value = "rb")]
    positive: String,
    /// Evaluation depth.
    #[arg(long, default_value_t = hintrank::eval::DEFAULT_DEPTH)]
    depth: usize,
    /// Columns to show: comma-separated p1, p3, p5, p10, map, mrr.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    /// Add a per-group table: parent_category or n_relevant.
    #[arg(long)]
    group_by: Option<String>,
    /// Leave groups with too few queries out of the group table.
    #[arg(long)]
    hide_flagged: bool,
    /// Row labels, one per run; file stems by default.
    #[arg(long, value_delimiter = ',')]
    name: Vec<String>,
    /// Machine-readable report file (JSON).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Judgment file; overrides paths.judgments.
    #[arg(long)]
    judgments: Option<PathBuf>,
    /// Pool depths, ascending.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50,100,200,500,1000")]
    ks: Vec<usize>,
    /// Run file whose order ranks the relevant docs for perfect coverage.
    #[arg(long)]
    priority: Option<PathBuf>,
    #[arg(long, default_value = "rb")]
    positive: String,
    /// Leave out the brand-name variants.
    #[arg(long)]
    no_brand_variants: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// How many times to run the whole query set.
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    /// Reuse the configured hint cache instead of generating hints every time.
    #[arg(long)]
    warm_cache: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory; created if missing.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = hintrank::synth::MAX_SYNTH_QUERIES)]
    queries: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// An error on its way to the exit status.
#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Data,
            message: message.into(),
        }
    }
}

/// For `map_err` on any classified library error.
pub fn fail<E: Classify + Display>(e: E) -> CliError {
    CliError {
        class: e.class(),
        message: e.to_string(),
    }
}

fn report(e: &CliError) {
    let line = serde_json::json!({
        "error": {
            "class": e.class,
            "exit_code": e.class.exit_code(),
            "message": e.message,
        }
    });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            report(&CliError::usage(first.trim_start_matches("error: ")));
            return ExitCode::from(ErrorClass::Usage.exit_code() as u8);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.class.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn arguments_are_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn classified_errors_keep_their_class() {
        let e = fail(hintrank::eval::EvalError::InvalidArgument("x".into()));
        assert_eq!(e.class.exit_code(), 2);
        assert_eq!(
            fail(hintrank::rerank::BackendError::Unsupported("pointwise"))
                .class
                .exit_code(),
            4
        );
    }
}
