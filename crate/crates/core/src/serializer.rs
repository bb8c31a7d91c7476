//! Fine-tuning sample construction.
//!
//! A context of utterances renders as role-prefixed lines joined by `\n`,
//! followed by an empty doctor prompt:
//!
//! ```text
//! 病人：宝宝咳嗽
//! 医生：多久了？
//! 病人：三天
//! 医生：
//! ```
//!
//! Every doctor turn of a conversation yields one sample whose target is
//! that turn's text.

use std::borrow::Borrow;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, Speaker, Utterance, DOCTOR_PREFIX, PATIENT_PREFIX};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_INPUT: usize = 1536;
pub const DEFAULT_MAX_TARGET: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub input: String,
    pub target: String,
    pub conversation_id: String,
    pub turn_index: usize,
}

impl TrainingSample {
    /// Stable identifier `<conversation id>#<turn index>`.
    pub fn sample_id(&self) -> String {
        format!("{}#{}", self.conversation_id, self.turn_index)
    }
}

/// Counts length units. Plug in a model tokenizer here; the default counts
/// Unicode scalar values.
pub trait LengthCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
    fn name(&self) -> &str;
}

#[derive(Clone, Default)]
pub enum LengthUnit {
    #[default]
    Characters,
    Custom(Arc<dyn LengthCounter>),
}

impl fmt::Debug for LengthUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LengthUnit::Characters => f.write_str("Characters"),
            LengthUnit::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

impl LengthUnit {
    pub fn count(&self, text: &str) -> usize {
        match self {
            LengthUnit::Characters => text.chars().count(),
            LengthUnit::Custom(c) => c.count(text),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LengthBudget {
    pub max_input_units: usize,
    pub max_target_units: usize,
    pub unit: LengthUnit,
}

impl Default for LengthBudget {
    fn default() -> Self {
        LengthBudget {
            max_input_units: DEFAULT_MAX_INPUT,
            max_target_units: DEFAULT_MAX_TARGET,
            unit: LengthUnit::Characters,
        }
    }
}

impl LengthBudget {
    pub fn new(max_input_units: usize, max_target_units: usize) -> Result<Self> {
        if max_input_units == 0 || max_target_units == 0 {
            return Err(Error::Config("length budget maxima must be positive".into()));
        }
        Ok(LengthBudget {
            max_input_units,
            max_target_units,
            unit: LengthUnit::Characters,
        })
    }

    pub fn with_unit(mut self, unit: LengthUnit) -> Self {
        self.unit = unit;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionPolicy {
    /// One sample per doctor turn.
    #[default]
    AllDoctorTurns,
    /// Only the last doctor turn.
    FinalTurnOnly,
}

/// `(context, target)` for each doctor turn, ordered by turn index.
pub fn expand_conversation(conv: &Conversation) -> Vec<(&[Utterance], &Utterance)> {
    conv.doctor_turns()
        .map(|(i, u)| (&conv.utterances()[..i], u))
        .collect()
}

/// Renders a context that starts with the patient, alternates, and ends with
/// a patient turn.
pub fn build_input(context: &[Utterance]) -> Result<String> {
    let first = context
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty context".into()))?;
    if first.speaker() != Speaker::Patient {
        return Err(Error::InvalidArgument(
            "context must start with a patient utterance".into(),
        ));
    }
    if context.windows(2).any(|w| w[0].speaker() == w[1].speaker()) {
        return Err(Error::InvalidArgument("context speakers must alternate".into()));
    }
    if context.last().map(Utterance::speaker) != Some(Speaker::Patient) {
        return Err(Error::InvalidArgument(
            "context must end with a patient utterance".into(),
        ));
    }
    let mut out = String::new();
    for u in context {
        out.push_str(u.speaker().prefix());
        out.push_str(u.text());
        out.push('\n');
    }
    out.push_str(DOCTOR_PREFIX);
    Ok(out)
}

/// Inverse of [`build_input`]: recovers the context utterances.
pub fn parse_input(input: &str) -> Result<Vec<Utterance>> {
    let body = input
        .strip_suffix(DOCTOR_PREFIX)
        .and_then(|s| s.strip_suffix('\n'))
        .ok_or_else(|| Error::Malformed("input must end with \"\\n医生：\"".into()))?;
    let mut out = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let expected = if i % 2 == 0 { Speaker::Patient } else { Speaker::Doctor };
        let text = line.strip_prefix(expected.prefix()).ok_or_else(|| {
            Error::Malformed(format!("line {} does not start with {}", i + 1, expected.prefix()))
        })?;
        let u = Utterance::new(expected, text)
            .filter(|u| u.text() == text)
            .ok_or_else(|| Error::Malformed(format!("line {} has unnormalized text", i + 1)))?;
        out.push(u);
    }
    if out.len() % 2 == 0 {
        return Err(Error::Malformed("context must end with a patient line".into()));
    }
    Ok(out)
}

/// Result of fitting one sample into a budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Truncation {
    Fits { input: String, target: String },
    /// Even the last patient line alone exceeds the input budget.
    Skip,
}

/// Drops whole turns from the front of `input` until it fits; the result is
/// always a suffix of `input` that still starts with a patient line. The
/// target is cut to `max_target_units`.
pub fn truncate(input: &str, target: &str, budget: &LengthBudget) -> Truncation {
    let unit = &budget.unit;
    let mut start = 0;
    if unit.count(input) > budget.max_input_units {
        // Byte offsets of every patient line after the first.
        let marker = format!("\n{PATIENT_PREFIX}");
        let cuts: Vec<usize> = input.match_indices(&marker).map(|(i, _)| i + 1).collect();
        match cuts
            .iter()
            .copied()
            .find(|&c| unit.count(&input[c..]) <= budget.max_input_units)
        {
            Some(c) => start = c,
            None => return Truncation::Skip,
        }
    }
    Truncation::Fits {
        input: input[start..].to_string(),
        target: cut_to(target, budget.max_target_units, unit),
    }
}

fn cut_to(text: &str, max: usize, unit: &LengthUnit) -> String {
    if unit.count(text) <= max {
        return text.to_string();
    }
    match unit {
        LengthUnit::Characters => text.chars().take(max).collect(),
        LengthUnit::Custom(_) => {
            // Longest char-boundary prefix within budget.
            let bounds: Vec<usize> = text
                .char_indices()
                .map(|(i, _)| i)
                .chain([text.len()])
                .collect();
            let (mut lo, mut hi) = (0, bounds.len() - 1);
            while lo < hi {
                let mid = (lo + hi + 1) / 2;
                if unit.count(&text[..bounds[mid]]) <= max {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            text[..bounds[lo]].to_string()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializeReport {
    pub conversations: u64,
    pub samples: u64,
    pub truncated_inputs: u64,
    pub truncated_targets: u64,
    pub skipped_over_budget: u64,
}

impl SerializeReport {
    pub fn merge(&mut self, other: &SerializeReport) {
        self.conversations += other.conversations;
        self.samples += other.samples;
        self.truncated_inputs += other.truncated_inputs;
        self.truncated_targets += other.truncated_targets;
        self.skipped_over_budget += other.skipped_over_budget;
    }
}

#[derive(Debug, Clone, Default)]
pub struct Serializer {
    pub budget: LengthBudget,
    pub expansion: ExpansionPolicy,
}

impl Serializer {
    pub fn new(budget: LengthBudget, expansion: ExpansionPolicy) -> Self {
        Serializer { budget, expansion }
    }

    /// Samples for one conversation plus the bookkeeping for them.
    pub fn samples(&self, conv: &Conversation) -> (Vec<TrainingSample>, SerializeReport) {
        let mut report = SerializeReport {
            conversations: 1,
            ..Default::default()
        };
        let mut pairs = conv.doctor_turns().collect::<Vec<_>>();
        if self.expansion == ExpansionPolicy::FinalTurnOnly {
            pairs = pairs.split_off(pairs.len() - 1);
        }
        let mut out = Vec::with_capacity(pairs.len());
        for (i, target) in pairs {
            let input = build_input(&conv.utterances()[..i])
                .expect("valid conversations yield valid contexts");
            match truncate(&input, target.text(), &self.budget) {
                Truncation::Skip => report.skipped_over_budget += 1,
                Truncation::Fits {
                    input: cut_input,
                    target: cut_target,
                } => {
                    report.truncated_inputs += (cut_input.len() != input.len()) as u64;
                    report.truncated_targets += (cut_target.len() != target.text().len()) as u64;
                    report.samples += 1;
                    out.push(TrainingSample {
                        input: cut_input,
                        target: cut_target,
                        conversation_id: conv.id().to_string(),
                        turn_index: i,
                    });
                }
            }
        }
        (out, report)
    }
}

#[derive(Serialize)]
struct TrainingLine<'a> {
    input: &'a str,
    target: &'a str,
}

/// Appends samples to a writer as `{"input": .., "target": ..}` lines.
pub struct TrainingWriter<W: Write> {
    out: W,
    written: usize,
}

impl TrainingWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(TrainingWriter::new(BufWriter::new(file)))
    }
}

impl<W: Write> TrainingWriter<W> {
    pub fn new(out: W) -> Self {
        TrainingWriter { out, written: 0 }
    }

    pub fn write(&mut self, sample: &TrainingSample) -> Result<()> {
        let line = serde_json::to_string(&TrainingLine {
            input: &sample.input,
            target: &sample.target,
        })?;
        writeln!(self.out, "{line}").map_err(|source| Error::PartialWrite {
            written: self.written,
            source,
        })?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush().map_err(|source| Error::PartialWrite {
            written: self.written,
            source,
        })?;
        Ok(self.written)
    }
}

pub fn write_training_file<I>(samples: I, path: impl AsRef<Path>) -> Result<usize>
where
    I: IntoIterator,
    I::Item: Borrow<TrainingSample>,
{
    let mut w = TrainingWriter::create(path)?;
    for s in samples {
        w.write(s.borrow())?;
    }
    w.finish()
}
