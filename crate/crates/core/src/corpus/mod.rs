//! Conversation data model and corpus I/O.
//!
//! A [`Conversation`] is an alternating patient/doctor exchange that always
//! opens with the patient and contains at least one doctor turn. Every reader
//! in this module repairs what it can (newline folding, merging consecutive
//! same-speaker messages) and rejects the rest, so downstream stages never see
//! an invalid conversation.

mod adapters;
mod native;
mod reader;
mod stats;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use native::{write_corpus, write_corpus_to};
pub use reader::{read_corpus, CorpusFormat, CorpusReader, ReadSummary};
pub use stats::{corpus_stats, CorpusStats, StatsAccumulator};

/// Role prefix for patient lines in serialized dialogue.
pub const PATIENT_PREFIX: &str = "病人：";
/// Role prefix for doctor lines in serialized dialogue.
pub const DOCTOR_PREFIX: &str = "医生：";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Patient,
    Doctor,
}

impl Speaker {
    pub fn prefix(self) -> &'static str {
        match self {
            Speaker::Patient => PATIENT_PREFIX,
            Speaker::Doctor => DOCTOR_PREFIX,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::Patient => "patient",
            Speaker::Doctor => "doctor",
        })
    }
}

/// Whether a doctor turn asks the patient something or advises them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerKind {
    Question,
    Suggestion,
}

/// A single message. Text is trimmed, non-empty, and contains no line breaks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Utterance {
    speaker: Speaker,
    text: String,
}

impl Utterance {
    /// Normalizes `text` (line breaks folded to one space, surrounding
    /// whitespace trimmed). Returns `None` when nothing is left.
    pub fn new(speaker: Speaker, text: impl AsRef<str>) -> Option<Self> {
        let text = normalize_text(text.as_ref());
        if text.is_empty() {
            None
        } else {
            Some(Utterance { speaker, text })
        }
    }

    pub fn speaker(&self) -> Speaker {
        self.speaker
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub(crate) fn with_text(&self, text: &str) -> Option<Self> {
        Utterance::new(self.speaker, text)
    }
}

impl<'de> Deserialize<'de> for Utterance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            speaker: Speaker,
            text: String,
        }
        let raw = Raw::deserialize(d)?;
        Utterance::new(raw.speaker, &raw.text)
            .ok_or_else(|| serde::de::Error::custom("utterance text is empty"))
    }
}

/// Folds every run of line-break characters into a single space and trims.
pub(crate) fn normalize_text(text: &str) -> String {
    let is_break = |c: char| matches!(c, '\n' | '\r' | '\u{2028}' | '\u{2029}' | '\u{85}');
    if !text.contains(is_break) {
        return text.trim().to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut in_break = false;
    for c in text.chars() {
        if is_break(c) {
            if !in_break {
                out.push(' ');
            }
            in_break = true;
        } else {
            out.push(c);
            in_break = false;
        }
    }
    out.trim().to_string()
}

/// Why a candidate record could not become a [`Conversation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// Fewer than two utterances survived normalization and merging.
    TooShort,
    /// The first utterance is not from the patient.
    DoctorFirst,
    /// No doctor utterance exists.
    NoDoctorTurn,
    /// Two consecutive utterances share a speaker (strict construction only).
    NotAlternating,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rejection::TooShort => "fewer than two utterances",
            Rejection::DoctorFirst => "first utterance is not from the patient",
            Rejection::NoDoctorTurn => "no doctor utterance",
            Rejection::NotAlternating => "consecutive utterances share a speaker",
        })
    }
}

impl std::error::Error for Rejection {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Conversation {
    id: String,
    utterances: Vec<Utterance>,
    source: String,
    meta: BTreeMap<String, String>,
}

impl Conversation {
    /// Strict constructor: the utterances must already alternate.
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        utterances: Vec<Utterance>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self, Rejection> {
        validate(&utterances)?;
        Ok(Conversation {
            id: id.into(),
            utterances,
            source: source.into(),
            meta,
        })
    }

    /// Repairing constructor used by ingest and cleaning: normalizes texts,
    /// drops empty messages, merges consecutive same-speaker messages with a
    /// single space, then validates.
    pub fn assemble<I, S>(
        id: impl Into<String>,
        source: impl Into<String>,
        turns: I,
        meta: BTreeMap<String, String>,
    ) -> Result<Self, Rejection>
    where
        I: IntoIterator<Item = (Speaker, S)>,
        S: AsRef<str>,
    {
        let utterances = merge_turns(
            turns
                .into_iter()
                .filter_map(|(speaker, text)| Utterance::new(speaker, text)),
        );
        Conversation::new(id, source, utterances, meta)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn doctor_turns(&self) -> impl Iterator<Item = (usize, &Utterance)> {
        self.utterances
            .iter()
            .enumerate()
            .filter(|(_, u)| u.speaker == Speaker::Doctor)
    }

    /// Replaces the text of utterance `index`, keeping everything else.
    /// Fails if the new text normalizes to nothing.
    pub fn replace_text(&mut self, index: usize, text: &str) -> Result<(), Rejection> {
        let updated = self.utterances[index]
            .with_text(text)
            .ok_or(Rejection::TooShort)?;
        self.utterances[index] = updated;
        Ok(())
    }
}

impl<'de> Deserialize<'de> for Conversation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = native::RawConversation::deserialize(d)?;
        raw.into_conversation().map_err(serde::de::Error::custom)
    }
}

/// Merges consecutive same-speaker utterances, joining texts with one space.
pub(crate) fn merge_turns(turns: impl IntoIterator<Item = Utterance>) -> Vec<Utterance> {
    let mut out: Vec<Utterance> = Vec::new();
    for u in turns {
        match out.last_mut() {
            Some(last) if last.speaker == u.speaker => {
                last.text.push(' ');
                last.text.push_str(&u.text);
            }
            _ => out.push(u),
        }
    }
    out
}

fn validate(utterances: &[Utterance]) -> Result<(), Rejection> {
    if utterances.len() < 2 {
        return Err(Rejection::TooShort);
    }
    if utterances[0].speaker != Speaker::Patient {
        return Err(Rejection::DoctorFirst);
    }
    if utterances.windows(2).any(|w| w[0].speaker == w[1].speaker) {
        return Err(Rejection::NotAlternating);
    }
    if !utterances.iter().any(|u| u.speaker == Speaker::Doctor) {
        return Err(Rejection::NoDoctorTurn);
    }
    Ok(())
}
