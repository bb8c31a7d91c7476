use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread;

use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::adapters;
use super::Conversation;
use crate::error::{Error, Result};

const MAX_DIAGNOSTICS: usize = 100;

/// Input dialects understood by [`read_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorpusFormat {
    Native,
    MeddialogCn,
    ImcsV2,
    ChipMdcfnpc,
    Meddg,
}

impl CorpusFormat {
    pub const ALL: [CorpusFormat; 5] = [
        CorpusFormat::Native,
        CorpusFormat::MeddialogCn,
        CorpusFormat::ImcsV2,
        CorpusFormat::ChipMdcfnpc,
        CorpusFormat::Meddg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorpusFormat::Native => "native",
            CorpusFormat::MeddialogCn => "meddialog_cn",
            CorpusFormat::ImcsV2 => "imcs_v2",
            CorpusFormat::ChipMdcfnpc => "chip_mdcfnpc",
            CorpusFormat::Meddg => "meddg",
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorpusFormat::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = CorpusFormat::ALL.iter().map(|f| f.name()).collect();
                Error::Config(format!(
                    "unknown corpus format `{s}` (valid formats: {})",
                    valid.join(", ")
                ))
            })
    }
}

/// Kept/skipped tally for one read.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadSummary {
    pub kept: usize,
    pub skipped: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

pub(crate) enum RawRecord {
    Line(String),
    Value(Option<String>, Value),
}

type RecordResult = std::result::Result<RawRecord, String>;

/// Streaming iterator over valid conversations.
///
/// Malformed or unrepairable records are skipped and tallied in
/// [`CorpusReader::summary`]; they never end the stream.
pub struct CorpusReader {
    format: CorpusFormat,
    records: Box<dyn Iterator<Item = RecordResult> + Send>,
    index: usize,
    summary: ReadSummary,
}

impl CorpusReader {
    pub fn format(&self) -> CorpusFormat {
        self.format
    }

    pub fn summary(&self) -> &ReadSummary {
        &self.summary
    }

    pub fn into_summary(self) -> ReadSummary {
        self.summary
    }

    /// Reader over an arbitrary byte source. `line_delimited` selects JSONL
    /// (one record per line) over a single JSON document.
    pub fn from_reader<R: Read + Send + 'static>(
        format: CorpusFormat,
        input: R,
        line_delimited: bool,
    ) -> Self {
        let records: Box<dyn Iterator<Item = RecordResult> + Send> = if line_delimited {
            Box::new(JsonLines {
                input: BufReader::new(input),
                line_no: 0,
            })
        } else {
            Box::new(DocumentRecords::spawn(input))
        };
        CorpusReader {
            format,
            records,
            index: 0,
            summary: ReadSummary::default(),
        }
    }

    fn skip(&mut self, why: String) {
        self.summary.skipped += 1;
        log::debug!("skipping record: {why}");
        if self.summary.diagnostics.len() < MAX_DIAGNOSTICS {
            self.summary.diagnostics.push(why);
        }
    }
}

impl Iterator for CorpusReader {
    type Item = Conversation;

    fn next(&mut self) -> Option<Conversation> {
        loop {
            let record = self.records.next()?;
            let index = self.index;
            self.index += 1;
            match record.and_then(|r| adapters::parse_record(self.format, r, index)) {
                Ok(conv) => {
                    self.summary.kept += 1;
                    return Some(conv);
                }
                Err(why) => self.skip(format!("record {index}: {why}")),
            }
        }
    }
}

/// Opens `path` and streams conversations in the given format.
///
/// Native corpora are always JSONL. Benchmark formats are read as JSONL when
/// the file name ends in `.jsonl`, otherwise as one JSON document whose top
/// level is an array of records (or an object keyed by record id).
pub fn read_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<CorpusReader> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let line_delimited = format == CorpusFormat::Native
        || path.extension().is_some_and(|ext| ext == "jsonl");
    Ok(CorpusReader::from_reader(format, file, line_delimited))
}

struct JsonLines<R> {
    input: BufReader<R>,
    line_no: usize,
}

impl<R: Read> Iterator for JsonLines<R> {
    type Item = RecordResult;

    fn next(&mut self) -> Option<RecordResult> {
        let mut buf = String::new();
        loop {
            buf.clear();
            self.line_no += 1;
            match self.input.read_line(&mut buf) {
                Ok(0) => return None,
                Ok(_) => {
                    let line = buf.trim();
                    if line.is_empty() {
                        continue;
                    }
                    return Some(Ok(RawRecord::Line(line.to_string())));
                }
                Err(e) => return Some(Err(format!("line {}: {e}", self.line_no))),
            }
        }
    }
}

/// Streams the elements of a top-level JSON array (or entries of a top-level
/// object) from a background parser thread through a bounded channel.
struct DocumentRecords {
    rx: Receiver<RecordResult>,
}

impl DocumentRecords {
    fn spawn<R: Read + Send + 'static>(input: R) -> Self {
        let (tx, rx) = sync_channel(256);
        thread::spawn(move || {
            let mut de = serde_json::Deserializer::from_reader(BufReader::new(input));
            let visitor = ElementSender { tx: tx.clone() };
            if let Err(e) = de.deserialize_any(visitor) {
                // An empty document is an empty corpus, not an error.
                let empty = e.is_eof() && e.line() == 1 && e.column() == 0;
                if !empty && !e.to_string().contains(DISCONNECTED) {
                    let _ = tx.send(Err(format!("document parse stopped: {e}")));
                }
            }
        });
        DocumentRecords { rx }
    }
}

impl Iterator for DocumentRecords {
    type Item = RecordResult;

    fn next(&mut self) -> Option<RecordResult> {
        self.rx.recv().ok()
    }
}

const DISCONNECTED: &str = "reader dropped";

struct ElementSender {
    tx: SyncSender<RecordResult>,
}

impl ElementSender {
    fn send<E: de::Error>(&self, item: RecordResult) -> std::result::Result<(), E> {
        self.tx.send(item).map_err(|_| E::custom(DISCONNECTED))
    }
}

impl<'de> Visitor<'de> for ElementSender {
    type Value = ();

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a JSON array of records or an object keyed by record id")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<(), A::Error> {
        while let Some(value) = seq.next_element::<Value>()? {
            self.send(Ok(RawRecord::Value(None, value)))?;
        }
        Ok(())
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<(), A::Error> {
        while let Some((key, value)) = map.next_entry::<String, Value>()? {
            self.send(Ok(RawRecord::Value(Some(key), value)))?;
        }
        Ok(())
    }
}
