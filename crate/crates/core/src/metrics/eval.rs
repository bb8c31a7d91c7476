use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bleu::{BleuOptions, BleuStats};
use super::classify::{AnswerClassifier, RuleClassifier};
use super::pqa::{pqa, PqaConfusion, PqaVariant};
use super::rouge::rouge;
use super::tokenize::Tokenizer;
use crate::error::{Error, Result};
use crate::parallel::{next_chunk, Workers, CHUNK_SIZE};

#[derive(Debug, Clone, Deserialize)]
struct PredRecord {
    id: String,
    prediction: String,
}

#[derive(Debug, Clone, Deserialize)]
struct RefRecord {
    id: String,
    target: String,
}

pub struct EvalOptions {
    pub dataset: String,
    pub model: String,
    pub tokenizer: Tokenizer,
    pub classifier: Arc<dyn AnswerClassifier>,
    pub pqa_variant: PqaVariant,
    pub bleu: BleuOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            dataset: "unnamed".into(),
            model: "unnamed".into(),
            tokenizer: Tokenizer::CharLevel,
            classifier: Arc::new(RuleClassifier::default()),
            pqa_variant: PqaVariant::PaperVerbatim,
            bleu: BleuOptions::default(),
        }
    }
}

/// One row of the evaluation table. All metric values are ratios in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub scale: String,
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub pqa: f64,
    pub pqa_variant: PqaVariant,
    pub pqa_degenerate: bool,
    pub pqa_confusion: PqaConfusion,
    pub samples: u64,
    pub missing: u64,
    pub classifier: String,
    pub tokenizer: String,
    pub bleu_options: BleuOptions,
    pub conventions: Conventions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub bleu: String,
    pub rouge: String,
    pub pqa: String,
}

/// Per-sample contributions, merged in input order.
#[derive(Debug, Clone, Default)]
struct Partial {
    bleu: BleuStats,
    rouge_f1: [f64; 3],
    confusion: PqaConfusion,
    samples: u64,
}

impl Partial {
    fn merge(&mut self, other: &Partial) {
        self.bleu.merge(&other.bleu);
        for k in 0..3 {
            self.rouge_f1[k] += other.rouge_f1[k];
        }
        self.confusion.merge(&other.confusion);
        self.samples += other.samples;
    }
}

/// Running evaluation over (prediction, target) pairs.
pub struct Evaluator<'a> {
    opts: &'a EvalOptions,
    acc: Partial,
    missing: u64,
}

impl<'a> Evaluator<'a> {
    pub fn new(opts: &'a EvalOptions) -> Self {
        Evaluator {
            opts,
            acc: Partial::default(),
            missing: 0,
        }
    }

    fn score_pair(&self, prediction: &str, target: &str) -> Partial {
        let hyp = self.opts.tokenizer.tokenize(prediction);
        let reference = self.opts.tokenizer.tokenize(target);
        let r = rouge(&hyp, &reference);
        let mut confusion = PqaConfusion::default();
        confusion.record(
            self.opts.classifier.classify(target),
            self.opts.classifier.classify(prediction),
        );
        Partial {
            bleu: BleuStats::from_pair(&hyp, &reference, self.opts.bleu.max_order),
            rouge_f1: [r.rouge_1.f1, r.rouge_2.f1, r.rouge_l.f1],
            confusion,
            samples: 1,
        }
    }

    /// Scores a batch of (prediction, target) pairs, in order.
    pub fn add_batch(&mut self, pairs: Vec<(String, String)>, workers: &Workers) {
        let partials = workers.map_ordered(pairs, |(p, t)| self.score_pair(&p, &t));
        for p in &partials {
            self.acc.merge(p);
        }
    }

    pub fn add_missing(&mut self, n: u64) {
        self.missing += n;
    }

    pub fn finish(&self) -> Result<EvalReport> {
        let acc = &self.acc;
        if acc.samples == 0 {
            return Err(Error::InvalidArgument(
                "no prediction matched a reference id".into(),
            ));
        }
        let bleu = acc.bleu.score(&self.opts.bleu);
        let pqa_score = pqa(&acc.confusion, self.opts.pqa_variant);
        let n = acc.samples as f64;
        let bleu_desc = match self.opts.bleu.mode {
            super::BleuMode::Cumulative => "cumulative",
            super::BleuMode::Individual => "individual",
        };
        Ok(EvalReport {
            dataset: self.opts.dataset.clone(),
            model: self.opts.model.clone(),
            scale: "ratio".into(),
            bleu_1: bleu.bleu[0],
            bleu_2: bleu.bleu[1],
            bleu_3: bleu.bleu[2],
            bleu_4: bleu.bleu[3],
            rouge_1: acc.rouge_f1[0] / n,
            rouge_2: acc.rouge_f1[1] / n,
            rouge_l: acc.rouge_f1[2] / n,
            pqa: pqa_score.pqa,
            pqa_variant: self.opts.pqa_variant,
            pqa_degenerate: pqa_score.degenerate,
            pqa_confusion: acc.confusion,
            samples: acc.samples,
            missing: self.missing,
            classifier: self.opts.classifier.name().to_string(),
            tokenizer: self.opts.tokenizer.name(),
            bleu_options: self.opts.bleu,
            conventions: Conventions {
                bleu: format!(
                    "corpus-level {bleu_desc} BLEU: clipped n-gram counts and lengths summed over all pairs, smoothing {}",
                    if self.opts.bleu.smoothing { "add-one (orders >= 2)" } else { "off" }
                ),
                rouge: "arithmetic mean of per-sample F1".into(),
                pqa: match self.opts.pqa_variant {
                    PqaVariant::PaperVerbatim => {
                        "P=Qtp/(Qtp+Qt~p), R=Qtp/(Qtp+Q~t~p), PQA=2PR/(P+R)".into()
                    }
                    PqaVariant::ConventionalF1 => {
                        "question-class F1: P=Qtp/(Qtp+Q~tp), R=Qtp/(Qtp+Qt~p)".into()
                    }
                },
            },
        })
    }
}

/// Result of [`evaluate`] with the warnings raised while matching ids.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub warnings: Vec<String>,
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(Error::io(path, e))),
        }))
}

/// Matches predictions to references by id and computes every table column.
///
/// Predictions are indexed in memory; references are streamed.
pub fn evaluate(
    pred_path: impl AsRef<Path>,
    ref_path: impl AsRef<Path>,
    opts: &EvalOptions,
    workers: &Workers,
) -> Result<EvalOutcome> {
    let (pred_path, ref_path) = (pred_path.as_ref(), ref_path.as_ref());
    let mut warnings = Vec::new();

    let mut preds: HashMap<String, String> = HashMap::new();
    for line in open_lines(pred_path)? {
        let (no, line) = line?;
        let rec: PredRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Malformed(format!("{}:{no}: {e}", pred_path.display()))
        })?;
        if preds.insert(rec.id.clone(), rec.prediction).is_some() {
            warnings.push(format!("duplicate prediction id `{}`; last one wins", rec.id));
        }
    }

    let mut evaluator = Evaluator::new(opts);
    let mut missing = 0u64;
    let mut refs = open_lines(ref_path)?;
    loop {
        let chunk = next_chunk(&mut refs, CHUNK_SIZE);
        if chunk.is_empty() {
            break;
        }
        let mut pairs = Vec::with_capacity(chunk.len());
        for line in chunk {
            let (no, line) = line?;
            let rec: RefRecord = serde_json::from_str(&line).map_err(|e| {
                Error::Malformed(format!("{}:{no}: {e}", ref_path.display()))
            })?;
            match preds.remove(&rec.id) {
                Some(p) => pairs.push((p, rec.target)),
                None => missing += 1,
            }
        }
        evaluator.add_batch(pairs, workers);
    }
    evaluator.add_missing(missing);
    if missing > 0 {
        warnings.push(format!("{missing} reference ids have no prediction and were excluded"));
    }
    if !preds.is_empty() {
        warnings.push(format!(
            "{} prediction ids have no reference and were ignored",
            preds.len()
        ));
    }
    Ok(EvalOutcome {
        report: evaluator.finish()?,
        warnings,
    })
}

impl EvalReport {
    /// Fixed-width table in column order BLEU-1..4, R-1, R-2, R-L, PQA.
    /// BLEU and ROUGE are shown x100; PQA as a ratio.
    pub fn to_table(&self) -> String {
        Self::table(std::slice::from_ref(self))
    }

    pub fn table(rows: &[EvalReport]) -> String {
        let headers = [
            "Dataset", "Model", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "R-1", "R-2", "R-L", "PQA",
        ];
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let pct = |v: f64| format!("{:.2}", v * 100.0);
                vec![
                    r.dataset.clone(),
                    r.model.clone(),
                    pct(r.bleu_1),
                    pct(r.bleu_2),
                    pct(r.bleu_3),
                    pct(r.bleu_4),
                    pct(r.rouge_1),
                    pct(r.rouge_2),
                    pct(r.rouge_l),
                    format!("{:.4}", r.pqa),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..headers.len())
            .map(|c| {
                body.iter()
                    .map(|row| row[c].chars().count())
                    .chain([headers[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::from("# BLEU and ROUGE x100, PQA as ratio\n");
        let render = |cells: Vec<&str>, out: &mut String| {
            let line: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| {
                    let pad = w.saturating_sub(cell.chars().count());
                    if c < 2 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        };
        render(headers.to_vec(), &mut out);
        for row in &body {
            render(row.iter().map(String::as_str).collect(), &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, lines: &[serde_json::Value]) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        path
    }

    #[test]
    fn identity_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let refs = write(
            dir.path(),
            "r.jsonl",
            &[
                serde_json::json!({"id": "1", "target": "咳嗽多久了？"}),
                serde_json::json!({"id": "2", "target": "建议多喝水注意休息"}),
            ],
        );
        let preds = write(
            dir.path(),
            "p.jsonl",
            &[
                serde_json::json!({"id": "1", "prediction": "咳嗽多久了？"}),
                serde_json::json!({"id": "2", "prediction": "建议多喝水注意休息"}),
            ],
        );
        let opts = EvalOptions {
            pqa_variant: PqaVariant::ConventionalF1,
            ..Default::default()
        };
        let out = evaluate(&preds, &refs, &opts, &Workers::sequential()).unwrap();
        let r = out.report;
        assert_eq!(
            [r.bleu_1, r.bleu_2, r.bleu_3, r.bleu_4, r.rouge_1, r.rouge_2, r.rouge_l, r.pqa],
            [1.0; 8]
        );
        assert!(out.warnings.is_empty());

        // The verbatim recall denominator counts the suggestion/suggestion
        // pair: P = 1, R = 1/2, PQA = 2/3 even for perfect predictions.
        let out = evaluate(&preds, &refs, &EvalOptions::default(), &Workers::sequential()).unwrap();
        assert!((out.report.pqa - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_prediction_is_excluded() {
        let dir = tempfile::tempdir().unwrap();
        let refs = write(
            dir.path(),
            "r.jsonl",
            &[
                serde_json::json!({"id": "1", "target": "多喝水"}),
                serde_json::json!({"id": "2", "target": "多休息"}),
                serde_json::json!({"id": "3", "target": "发烧吗"}),
            ],
        );
        let preds = write(
            dir.path(),
            "p.jsonl",
            &[
                serde_json::json!({"id": "1", "prediction": "多喝水"}),
                serde_json::json!({"id": "3", "prediction": "发烧吗"}),
            ],
        );
        let out = evaluate(&preds, &refs, &EvalOptions::default(), &Workers::sequential()).unwrap();
        assert_eq!(out.report.samples, 2);
        assert_eq!(out.report.missing, 1);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn no_matches_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let refs = write(dir.path(), "r.jsonl", &[serde_json::json!({"id": "1", "target": "a"})]);
        let preds = write(dir.path(), "p.jsonl", &[serde_json::json!({"id": "9", "prediction": "a"})]);
        assert!(evaluate(&preds, &refs, &EvalOptions::default(), &Workers::sequential()).is_err());
    }

    #[test]
    fn table_has_all_columns() {
        let opts = EvalOptions::default();
        let mut ev = Evaluator::new(&opts);
        ev.add_batch(vec![("多喝水".into(), "多喝水".into())], &Workers::sequential());
        let table = ev.finish().unwrap().to_table();
        let header = table.lines().nth(1).unwrap();
        assert_eq!(header.split_whitespace().count(), 10);
        assert!(header.contains("R-L"));
    }
}
