use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{Conversation, Rejection, Speaker};
use crate::error::{Error, Result};

pub(crate) const DEFAULT_NATIVE_SOURCE: &str = "native";

/// Native JSONL record before repair and validation.
#[derive(Debug, Deserialize)]
pub(crate) struct RawConversation {
    id: String,
    utterances: Vec<RawUtterance>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    meta: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Deserialize)]
struct RawUtterance {
    speaker: Speaker,
    text: String,
}

impl RawConversation {
    pub(crate) fn into_conversation(self) -> Result<Conversation, Rejection> {
        Conversation::assemble(
            self.id,
            self.source
                .unwrap_or_else(|| DEFAULT_NATIVE_SOURCE.to_string()),
            self.utterances.into_iter().map(|u| (u.speaker, u.text)),
            self.meta.unwrap_or_default(),
        )
    }
}

/// Writes one JSON object per line. Returns the number of conversations written.
pub fn write_corpus<I>(convs: I, path: impl AsRef<Path>) -> Result<usize>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Conversation>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus_to(convs, BufWriter::new(file))
}

pub fn write_corpus_to<I, W>(convs: I, mut out: W) -> Result<usize>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Conversation>,
    W: Write,
{
    let mut written = 0;
    for conv in convs {
        let line = serde_json::to_string(std::borrow::Borrow::borrow(&conv))?;
        writeln!(out, "{line}").map_err(|source| Error::PartialWrite { written, source })?;
        written += 1;
    }
    out.flush()
        .map_err(|source| Error::PartialWrite { written, source })?;
    Ok(written)
}
