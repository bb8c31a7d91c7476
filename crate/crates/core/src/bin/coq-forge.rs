use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use coq_forge::cleaner::{load_rules, Cleaner, QualityScorer};
use coq_forge::corpus::CorpusFormat;
use coq_forge::metrics::{
    classifier_by_name, evaluate, generate_predictions, read_contexts, BleuMode, EvalOptions,
    GenerationConfig, PqaVariant, PredictionWriter, Tokenizer,
};
use coq_forge::parallel::Workers;
use coq_forge::pipeline::{
    checkpoint_path, run_clean, run_ingest, run_pipeline, run_polish, run_serialize, run_stats,
    write_json, ClientSource, PipelineConfig, SerializeOutputs,
};
use coq_forge::polisher::{
    ChatClient, LlmClientConfig, PolishCache, PolishPolicy, Polisher, PromptTemplate,
};
use coq_forge::serializer::{
    ExpansionPolicy, LengthBudget, Serializer, DEFAULT_MAX_INPUT, DEFAULT_MAX_TARGET,
};
use coq_forge::{Error, Result};

/// Corpus construction and evaluation for proactive medical dialogue.
///
/// Exit status: 0 success, 1 runtime or I/O failure, 2 usage or
/// configuration error, 3 external service failure.
#[derive(Parser)]
#[command(name = "coq-forge", version)]
struct Cli {
    /// Worker threads for clean, serialize, stats and eval (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a benchmark file to native JSONL.
    Ingest(IngestArgs),
    /// Strip crawl noise with a rule set.
    Clean(CleanArgs),
    /// Rewrite doctor suggestions through a chat-completion endpoint.
    Polish(PolishArgs),
    /// Expand conversations into input/target training pairs.
    Serialize(SerializeArgs),
    /// Question/suggestion statistics of a corpus.
    Stats(StatsArgs),
    /// Score predictions against references.
    Eval(EvalArgs),
    /// Request model predictions for serialized contexts.
    Generate(GenerateArgs),
    /// Run ingest, clean, polish, serialize and stats from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// One of: native, meddialog_cn, imcs_v2, chip_mdcfnpc, meddg.
    #[arg(long)]
    format: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CleanArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// Rule file, or `default` for the bundled rules.
    #[arg(long, default_value = "default")]
    rules: PathBuf,
    /// Minimum quality score counted as excellent.
    #[arg(long)]
    quality_threshold: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    All,
    Final,
}

#[derive(Args)]
struct PolishArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// Client config JSON.
    #[arg(long)]
    client: PathBuf,
    /// Prompt template file with `{history}` and `{answer}` placeholders.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Response cache directory (default: in memory only).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    policy: PolicyArg,
    #[arg(long, default_value = "rule")]
    classifier: String,
    /// Continue an interrupted run from its checkpoint.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExpansionArg {
    All,
    Final,
}

#[derive(Args)]
struct SerializeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Training pairs, `{"input","target"}` per line.
    #[arg(long = "out")]
    output: PathBuf,
    /// Also write `{"id","input"}` lines for generation.
    #[arg(long)]
    contexts: Option<PathBuf>,
    /// Also write `{"id","target"}` lines for evaluation.
    #[arg(long)]
    references: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_INPUT)]
    max_input: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_TARGET)]
    max_target: usize,
    #[arg(long, value_enum, default_value = "all")]
    expansion: ExpansionArg,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "rule")]
    classifier: String,
    /// Write the stats here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// `{"id","prediction"}` lines.
    #[arg(long)]
    pred: PathBuf,
    /// `{"id","target"}` lines.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// `char`, `whitespace`, `jieba` or `jieba:<lexicon>`.
    #[arg(long, default_value = "char")]
    tokenizer: String,
    #[arg(long, default_value = "rule")]
    classifier: String,
    /// `paper` or `conventional`.
    #[arg(long, default_value = "paper")]
    pqa_variant: String,
    /// Score BLEU-n on the order-n precision alone.
    #[arg(long)]
    individual_bleu: bool,
    #[arg(long)]
    smoothing: bool,
    #[arg(long, default_value = "unnamed")]
    dataset: String,
    #[arg(long, default_value = "unnamed")]
    model: String,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// `{"id","input"}` lines.
    #[arg(long)]
    contexts: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// Client config JSON.
    #[arg(long)]
    client: PathBuf,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_new_units: Option<u32>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline config JSON. Flags below override its fields.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    skip_polish: bool,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    client: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// A command failure with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = Workers::new(cli.workers)
        .map_err(Failure::from)
        .and_then(|workers| dispatch(cli.command, cli.workers, &workers));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command, threads: Option<usize>, workers: &Workers) -> CmdResult {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Clean(a) => clean(a, workers),
        Command::Polish(a) => polish(a),
        Command::Serialize(a) => serialize(a, workers),
        Command::Stats(a) => stats(a),
        Command::Eval(a) => eval(a, workers),
        Command::Generate(a) => generate(a),
        Command::Pipeline(a) => pipeline(a, threads),
    }
}

/// One JSON line on standard error.
fn diagnostic(value: serde_json::Value) {
    eprintln!("{value}");
}

fn report<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<()> {
    match path {
        Some(p) => write_json(p, value),
        None => Ok(()),
    }
}

fn ingest(a: IngestArgs) -> CmdResult {
    let format: CorpusFormat = a.format.parse()?;
    let summary = run_ingest(&a.input, format, &a.output)?;
    diagnostic(json!({"stage": "ingest", "kept": summary.kept, "skipped": summary.skipped}));
    report(&a.report, &summary)?;
    Ok(())
}

fn clean(a: CleanArgs, workers: &Workers) -> CmdResult {
    let rules = load_rules(&a.rules)?;
    let cleaner = match a.quality_threshold {
        Some(t) => {
            let scorer = QualityScorer::for_rules(&rules).with_threshold(t)?;
            Cleaner::with_scorer(rules, scorer)
        }
        None => Cleaner::new(rules),
    };
    let r = run_clean(&a.input, &a.output, &cleaner, workers)?;
    diagnostic(json!({
        "stage": "clean",
        "kept": r.conversations_kept,
        "dropped": r.conversations_dropped,
        "rule_hits": r.total_hits(),
        "excellent_rate_before": r.excellent_rate_before,
        "excellent_rate_after": r.excellent_rate_after,
    }));
    report(&a.report, &r)?;
    Ok(())
}

fn load_client(path: &Path) -> Result<ChatClient> {
    let config = LlmClientConfig::load(path)?;
    // Checked before any request is made.
    Ok(ChatClient::from_env(config)?)
}

fn polish(a: PolishArgs) -> CmdResult {
    let client = load_client(&a.client)?;
    let template = match &a.template {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::default(),
    };
    let cache = match &a.cache_dir {
        Some(d) => PolishCache::open(d)?,
        None => PolishCache::in_memory(),
    };
    let classifier = classifier_by_name(&a.classifier)?;
    let policy = match a.policy {
        PolicyArg::All => PolishPolicy::AllSuggestions,
        PolicyArg::Final => PolishPolicy::FinalSuggestionOnly,
    };
    let polisher = Polisher::new(client, cache, template, classifier, policy);
    match run_polish(&a.input, &a.output, &polisher, a.resume) {
        Ok(r) => {
            diagnostic(json!({
                "stage": "polish",
                "conversations": r.conversations,
                "polished_turns": r.polished_turns,
                "failed_turns": r.failed_turns,
                "cache_hits": r.cache_hits,
            }));
            report(&a.report, &r)?;
            Ok(())
        }
        Err(abort) => {
            diagnostic(json!({
                "stage": "polish",
                "aborted": true,
                "checkpoint": abort.checkpoint,
                "checkpoint_file": checkpoint_path(&a.output),
            }));
            report(&a.report, &abort.report)?;
            Err(abort.error.into())
        }
    }
}

fn serialize(a: SerializeArgs, workers: &Workers) -> CmdResult {
    let budget = LengthBudget::new(a.max_input, a.max_target)?;
    let expansion = match a.expansion {
        ExpansionArg::All => ExpansionPolicy::AllDoctorTurns,
        ExpansionArg::Final => ExpansionPolicy::FinalTurnOnly,
    };
    let outputs = SerializeOutputs {
        train: a.output,
        contexts: a.contexts,
        references: a.references,
    };
    let r = run_serialize(&a.input, &outputs, &Serializer::new(budget, expansion), workers)?;
    diagnostic(json!({
        "stage": "serialize",
        "conversations": r.conversations,
        "samples": r.samples,
        "skipped_over_budget": r.skipped_over_budget,
    }));
    report(&a.report, &r)?;
    Ok(())
}

fn stats(a: StatsArgs) -> CmdResult {
    let classifier = classifier_by_name(&a.classifier)?;
    let s = run_stats(&a.input, classifier.as_ref())?;
    match &a.report {
        Some(p) => write_json(p, &s)?,
        None => println!("{}", serde_json::to_string_pretty(&s).map_err(Error::from)?),
    }
    Ok(())
}

fn eval(a: EvalArgs, workers: &Workers) -> CmdResult {
    let pqa_variant = PqaVariant::parse(&a.pqa_variant).ok_or_else(|| {
        Error::Config(format!(
            "unknown PQA variant `{}` (valid: paper, conventional)",
            a.pqa_variant
        ))
    })?;
    let mut opts = EvalOptions {
        dataset: a.dataset,
        model: a.model,
        tokenizer: Tokenizer::from_spec(&a.tokenizer)?,
        classifier: classifier_by_name(&a.classifier)?,
        pqa_variant,
        ..Default::default()
    };
    opts.bleu.smoothing = a.smoothing;
    if a.individual_bleu {
        opts.bleu.mode = BleuMode::Individual;
    }
    let outcome = evaluate(&a.pred, &a.reference, &opts, workers)?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    print!("{}", outcome.report.to_table());
    report(&a.report, &outcome.report)?;
    Ok(())
}

fn generate(a: GenerateArgs) -> CmdResult {
    let mut gen = GenerationConfig::default();
    if let Some(v) = a.top_p {
        gen.top_p = v;
    }
    if let Some(v) = a.temperature {
        gen.temperature = v;
    }
    if let Some(v) = a.max_new_units {
        gen.max_new_units = v;
    }
    gen.validate()?;
    let client = load_client(&a.client)?;
    let mut out = PredictionWriter::create(&a.output)?;
    let r = generate_predictions(&client, read_contexts(&a.contexts)?, &gen, |p| out.write(&p))?;
    out.finish()?;
    diagnostic(json!({
        "stage": "generate",
        "contexts": r.contexts,
        "failed": r.failed,
        "requests_sent": r.requests_sent,
    }));
    report(&a.report, &r)?;
    if r.contexts > 0 && r.failed == r.contexts {
        return Err(Failure {
            code: 3,
            message: "every generation request failed".into(),
        });
    }
    Ok(())
}

fn pipeline(a: PipelineArgs, threads: Option<usize>) -> CmdResult {
    let mut config = PipelineConfig::load(&a.config)?;
    if a.skip_polish {
        config.skip_polish = true;
    }
    if let Some(p) = a.input {
        config.input = p;
    }
    if let Some(f) = a.format {
        config.format = f;
    }
    if let Some(d) = a.output_dir {
        config.output_dir = d;
    }
    if let Some(c) = a.client {
        config.client = Some(ClientSource::Path(c));
    }
    if let Some(d) = a.cache_dir {
        config.cache_dir = Some(d);
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if threads.is_some() {
        config.workers = threads;
    }
    match run_pipeline(&config) {
        Ok(s) => {
            diagnostic(json!({
                "stage": "pipeline",
                "conversations": s.stats.n_conversations,
                "samples": s.serialize.samples,
                "question_fraction": s.stats.question_fraction,
            }));
            Ok(())
        }
        Err(f) => Err(Failure {
            code: f.error.exit_code() as u8,
            message: f.to_string(),
        }),
    }
}
