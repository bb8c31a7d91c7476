//! Stage runners over files, shared by the command-line tool and the
//! end-to-end pipeline. Every stage streams its input.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Seek, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cleaner::{load_rules, Cleaner, CleaningReport};
use crate::corpus::{
    read_corpus, Conversation, CorpusFormat, CorpusStats, ReadSummary, StatsAccumulator,
};
use crate::error::{Error, Result};
use crate::metrics::{classifier_by_name, AnswerClassifier, Tokenizer};
use crate::parallel::{next_chunk, Workers, CHUNK_SIZE};
use crate::polisher::{
    ChatClient, LlmClientConfig, PolishAbort, PolishCache, PolishPolicy, PolishReport,
    PromptTemplate, Polisher,
};
use crate::serializer::{
    ExpansionPolicy, LengthBudget, SerializeReport, Serializer, TrainingSample, TrainingWriter,
    DEFAULT_MAX_INPUT, DEFAULT_MAX_TARGET,
};

/// Streaming JSONL writer for native conversations.
pub struct CorpusWriter {
    out: BufWriter<File>,
    path: PathBuf,
    written: usize,
    bytes: u64,
}

impl CorpusWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(CorpusWriter {
            out: BufWriter::new(file),
            path,
            written: 0,
            bytes: 0,
        })
    }

    /// Reopens `path`, cut back to `bytes`, for appending.
    fn resume(path: impl AsRef<Path>, bytes: u64, written: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        file.set_len(bytes).map_err(|e| Error::io(&path, e))?;
        file.seek(std::io::SeekFrom::End(0))
            .map_err(|e| Error::io(&path, e))?;
        Ok(CorpusWriter {
            out: BufWriter::new(file),
            path,
            written,
            bytes,
        })
    }

    pub fn write(&mut self, conv: &Conversation) -> Result<()> {
        let mut line = serde_json::to_string(conv)?;
        line.push('\n');
        self.out
            .write_all(line.as_bytes())
            .map_err(|source| Error::PartialWrite {
                written: self.written,
                source,
            })?;
        self.written += 1;
        self.bytes += line.len() as u64;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<usize> {
        self.flush()?;
        Ok(self.written)
    }
}

fn native(path: &Path) -> Result<crate::corpus::CorpusReader> {
    read_corpus(path, CorpusFormat::Native)
}

fn warn_skips(stage: &str, summary: &ReadSummary) {
    if summary.skipped > 0 {
        log::warn!("{stage}: skipped {} malformed records", summary.skipped);
        for d in summary.diagnostics.iter().take(5) {
            log::warn!("{stage}: {d}");
        }
    }
}

/// Benchmark file to native JSONL.
pub fn run_ingest(input: &Path, format: CorpusFormat, output: &Path) -> Result<ReadSummary> {
    let mut reader = read_corpus(input, format)?;
    let mut out = CorpusWriter::create(output)?;
    for conv in reader.by_ref() {
        out.write(&conv)?;
    }
    out.finish()?;
    let summary = reader.into_summary();
    warn_skips("ingest", &summary);
    if summary.kept == 0 {
        log::warn!("ingest: no conversations read from {}", input.display());
    }
    Ok(summary)
}

pub fn run_clean(input: &Path, output: &Path, cleaner: &Cleaner, workers: &Workers) -> Result<CleaningReport> {
    let mut reader = native(input)?;
    let mut out = CorpusWriter::create(output)?;
    let report = cleaner.clean_stream(reader.by_ref(), workers, |c| out.write(&c))?;
    out.finish()?;
    warn_skips("clean", reader.summary());
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    last_completed_id: String,
    completed: usize,
    output_bytes: u64,
}

pub fn checkpoint_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".checkpoint");
    PathBuf::from(name)
}

/// Polishes `input` into `output`. A checkpoint next to the output tracks
/// progress; with `resume`, a previous interrupted run is continued. The
/// checkpoint is removed on success.
pub fn run_polish(
    input: &Path,
    output: &Path,
    polisher: &Polisher,
    resume: bool,
) -> Result<PolishReport, PolishAbort> {
    let abort = |error: Error| PolishAbort {
        error,
        checkpoint: None,
        report: PolishReport::default(),
    };
    let ckpt_path = checkpoint_path(output);
    let previous: Option<Checkpoint> = if resume && ckpt_path.exists() {
        let text = std::fs::read_to_string(&ckpt_path).map_err(|e| abort(Error::io(&ckpt_path, e)))?;
        Some(serde_json::from_str(&text).map_err(|e| abort(e.into()))?)
    } else {
        None
    };
    let mut out = match &previous {
        Some(c) => CorpusWriter::resume(output, c.output_bytes, c.completed),
        None => CorpusWriter::create(output),
    }
    .map_err(abort)?;
    let reader = native(input).map_err(abort)?;

    let save = |id: &str, out: &mut CorpusWriter| -> Result<()> {
        out.flush()?;
        let c = Checkpoint {
            last_completed_id: id.to_string(),
            completed: out.written,
            output_bytes: out.bytes,
        };
        std::fs::write(&ckpt_path, serde_json::to_string(&c)?).map_err(|e| Error::io(&ckpt_path, e))
    };
    let resume_after = previous.as_ref().map(|c| c.last_completed_id.as_str());
    let report = polisher.polish_corpus(reader, resume_after, |p| {
        out.write(&p.conversation)?;
        save(p.conversation.id(), &mut out)
    })?;
    out.finish().map_err(abort)?;
    let _ = std::fs::remove_file(&ckpt_path);
    Ok(report)
}

/// Where `run_serialize` writes its outputs.
#[derive(Debug, Clone, Default)]
pub struct SerializeOutputs {
    pub train: PathBuf,
    /// `{"id","input"}` lines for generation.
    pub contexts: Option<PathBuf>,
    /// `{"id","target"}` lines for evaluation.
    pub references: Option<PathBuf>,
}

fn jsonl_writer(path: &Option<PathBuf>) -> Result<Option<BufWriter<File>>> {
    path.as_ref()
        .map(|p| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e)))
        .transpose()
}

pub fn run_serialize(
    input: &Path,
    outputs: &SerializeOutputs,
    serializer: &Serializer,
    workers: &Workers,
) -> Result<SerializeReport> {
    let mut reader = native(input)?;
    let mut train = TrainingWriter::create(&outputs.train)?;
    let mut contexts = jsonl_writer(&outputs.contexts)?;
    let mut references = jsonl_writer(&outputs.references)?;
    let mut report = SerializeReport::default();
    loop {
        let chunk = next_chunk(&mut reader, CHUNK_SIZE);
        if chunk.is_empty() {
            break;
        }
        for (samples, r) in workers.map_ordered(chunk, |c| serializer.samples(&c)) {
            report.merge(&r);
            for s in &samples {
                train.write(s)?;
                write_side_files(s, contexts.as_mut(), references.as_mut(), outputs)?;
            }
        }
    }
    train.finish()?;
    for (w, p) in [(contexts, &outputs.contexts), (references, &outputs.references)] {
        if let (Some(mut w), Some(p)) = (w, p) {
            w.flush().map_err(|e| Error::io(p, e))?;
        }
    }
    warn_skips("serialize", reader.summary());
    if report.skipped_over_budget > 0 {
        log::warn!(
            "serialize: {} samples skipped because the last patient turn exceeds the input budget",
            report.skipped_over_budget
        );
    }
    Ok(report)
}

fn write_side_files(
    s: &TrainingSample,
    contexts: Option<&mut BufWriter<File>>,
    references: Option<&mut BufWriter<File>>,
    outputs: &SerializeOutputs,
) -> Result<()> {
    let id = s.sample_id();
    if let (Some(w), Some(p)) = (contexts, &outputs.contexts) {
        let line = serde_json::json!({"id": id, "input": s.input});
        writeln!(w, "{line}").map_err(|e| Error::io(p, e))?;
    }
    if let (Some(w), Some(p)) = (references, &outputs.references) {
        let line = serde_json::json!({"id": id, "target": s.target});
        writeln!(w, "{line}").map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

pub fn run_stats(input: &Path, classifier: &dyn AnswerClassifier) -> Result<CorpusStats> {
    let mut reader = native(input)?;
    let mut acc = StatsAccumulator::default();
    for conv in reader.by_ref() {
        acc.add(&conv, classifier);
    }
    warn_skips("stats", reader.summary());
    Ok(acc.finish())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClientSource {
    Path(PathBuf),
    Inline(LlmClientConfig),
}

impl ClientSource {
    pub fn resolve(&self) -> Result<LlmClientConfig> {
        match self {
            ClientSource::Path(p) => LlmClientConfig::load(p),
            ClientSource::Inline(c) => {
                c.validate()?;
                Ok(c.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetConfig {
    pub max_input_units: usize,
    pub max_target_units: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            max_input_units: DEFAULT_MAX_INPUT,
            max_target_units: DEFAULT_MAX_TARGET,
        }
    }
}

/// JSON run configuration. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub format: String,
    /// `"default"` or a rule file.
    pub rules: String,
    pub template: Option<PathBuf>,
    pub client: Option<ClientSource>,
    pub budget: BudgetConfig,
    pub expansion: ExpansionPolicy,
    pub polish_policy: PolishPolicy,
    pub tokenizer: String,
    pub classifier: String,
    pub output_dir: PathBuf,
    /// Recorded in the run report. Nothing in the local stages samples.
    pub seed: u64,
    pub skip_polish: bool,
    /// Defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::new(),
            format: "native".into(),
            rules: "default".into(),
            template: None,
            client: None,
            budget: BudgetConfig::default(),
            expansion: ExpansionPolicy::default(),
            polish_policy: PolishPolicy::default(),
            tokenizer: "char".into(),
            classifier: "rule".into(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            skip_polish: false,
            cache_dir: None,
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        fix(&mut self.output_dir);
        if let Some(p) = self.template.as_mut() {
            fix(p);
        }
        if let Some(p) = self.cache_dir.as_mut() {
            fix(p);
        }
        if let Some(ClientSource::Path(p)) = self.client.as_mut() {
            fix(p);
        }
        if self.rules != "default" {
            let mut p = PathBuf::from(&self.rules);
            fix(&mut p);
            self.rules = p.to_string_lossy().into_owned();
        }
    }

    /// Checks formats, names and referenced files before any stage runs.
    pub fn validate(&self) -> Result<()> {
        self.format.parse::<CorpusFormat>()?;
        Tokenizer::from_spec(&self.tokenizer)?;
        classifier_by_name(&self.classifier)?;
        LengthBudget::new(self.budget.max_input_units, self.budget.max_target_units)?;
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} `{}` does not exist", p.display())))
            }
        };
        must_exist(&self.input, "input")?;
        if self.rules != "default" {
            must_exist(Path::new(&self.rules), "rule file")?;
        }
        if let Some(t) = &self.template {
            must_exist(t, "template")?;
        }
        if !self.skip_polish {
            match &self.client {
                None => {
                    return Err(Error::Config(
                        "a client config is required unless skip_polish is set".into(),
                    ))
                }
                Some(ClientSource::Path(p)) => must_exist(p, "client config")?,
                Some(ClientSource::Inline(c)) => c.validate()?,
            }
        }
        Ok(())
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Reports of every stage, also written to `pipeline_report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub ingest: ReadSummary,
    pub clean: CleaningReport,
    pub polish: Option<PolishReport>,
    pub serialize: SerializeReport,
    pub stats: CorpusStats,
}

/// A stage that failed, with the error that stopped it. Outputs of earlier
/// stages stay on disk.
#[derive(Debug)]
pub struct StageFailure {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {}

/// Runs ingest, clean, polish, serialize and stats in order. Outputs land
/// in `output_dir`: `corpus.jsonl`, `cleaned.jsonl`, `polished.jsonl`,
/// `train.jsonl`, `stats.json` and one `<stage>_report.json` per stage.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, StageFailure> {
    let at = |stage: &'static str| move |error: Error| StageFailure { stage, error };
    config.validate().map_err(at("config"))?;
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| at("config")(Error::io(&config.output_dir, e)))?;
    let workers = Workers::new(config.workers).map_err(at("config"))?;
    let classifier: Arc<dyn AnswerClassifier> =
        classifier_by_name(&config.classifier).map_err(at("config"))?;
    let format: CorpusFormat = config.format.parse().map_err(at("config"))?;

    let corpus = config.output("corpus.jsonl");
    let ingest = run_ingest(&config.input, format, &corpus).map_err(at("ingest"))?;
    write_json(&config.output("ingest_report.json"), &ingest).map_err(at("ingest"))?;

    let cleaned = config.output("cleaned.jsonl");
    let rules = load_rules(&config.rules).map_err(at("clean"))?;
    let clean = run_clean(&corpus, &cleaned, &Cleaner::new(rules), &workers).map_err(at("clean"))?;
    write_json(&config.output("clean_report.json"), &clean).map_err(at("clean"))?;

    let polished = config.output("polished.jsonl");
    let polish = if config.skip_polish {
        std::fs::copy(&cleaned, &polished).map_err(|e| at("polish")(Error::io(&polished, e)))?;
        None
    } else {
        let client_config = config
            .client
            .as_ref()
            .expect("validated")
            .resolve()
            .map_err(at("polish"))?;
        let client = ChatClient::from_env(client_config).map_err(|e| at("polish")(e.into()))?;
        let template = match &config.template {
            Some(p) => PromptTemplate::load(p).map_err(at("polish"))?,
            None => PromptTemplate::default(),
        };
        let cache_dir = config
            .cache_dir
            .clone()
            .unwrap_or_else(|| config.output("cache"));
        let cache = PolishCache::open(&cache_dir).map_err(at("polish"))?;
        let polisher = Polisher::new(client, cache, template, classifier.clone(), config.polish_policy);
        let report = run_polish(&cleaned, &polished, &polisher, false).map_err(|a| at("polish")(a.error))?;
        write_json(&config.output("polish_report.json"), &report).map_err(at("polish"))?;
        Some(report)
    };

    let budget = LengthBudget::new(config.budget.max_input_units, config.budget.max_target_units)
        .map_err(at("serialize"))?;
    let serializer = Serializer::new(budget, config.expansion);
    let outputs = SerializeOutputs {
        train: config.output("train.jsonl"),
        ..Default::default()
    };
    let serialize = run_serialize(&polished, &outputs, &serializer, &workers).map_err(at("serialize"))?;
    write_json(&config.output("serialize_report.json"), &serialize).map_err(at("serialize"))?;

    let stats = run_stats(&polished, classifier.as_ref()).map_err(at("stats"))?;
    write_json(&config.output("stats.json"), &stats).map_err(at("stats"))?;

    let summary = PipelineSummary {
        seed: config.seed,
        ingest,
        clean,
        polish,
        serialize,
        stats,
    };
    write_json(&config.output("pipeline_report.json"), &summary).map_err(at("stats"))?;
    Ok(summary)
}
