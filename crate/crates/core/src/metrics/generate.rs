use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polisher::{ChatClient, Sampling};

/// Decoding parameters forwarded to the model endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub top_p: f64,
    pub temperature: f64,
    pub max_new_units: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            top_p: 0.75,
            temperature: 0.95,
            max_new_units: 512,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.max_new_units == 0 {
            return Err(Error::Config("max_new_units must be positive".into()));
        }
        Ok(())
    }

    pub fn sampling(&self) -> Sampling {
        Sampling {
            temperature: self.temperature,
            top_p: Some(self.top_p),
            max_tokens: self.max_new_units,
        }
    }
}

/// One serialized model input, as written by `serialize --contexts`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub id: String,
    pub input: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub contexts: u64,
    pub failed: u64,
    pub requests_sent: u64,
}

pub struct PredictionWriter<W: Write> {
    out: W,
    written: usize,
}

impl PredictionWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(PredictionWriter::new(BufWriter::new(file)))
    }
}

impl<W: Write> PredictionWriter<W> {
    pub fn new(out: W) -> Self {
        PredictionWriter { out, written: 0 }
    }

    pub fn write(&mut self, p: &Prediction) -> Result<()> {
        let line = serde_json::to_string(p)?;
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

/// Streams `{"id","input"}` lines. Blank lines are skipped; a bad line is
/// an error naming its line number.
pub fn read_contexts(path: impl AsRef<Path>) -> Result<impl Iterator<Item = Result<ContextRecord>>> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(serde_json::from_str(&l).map_err(|e| {
                Error::Malformed(format!("{}:{}: {e}", path.display(), i + 1))
            })),
            Err(e) => Some(Err(Error::io(&path, e))),
        }))
}

/// Requests one completion per context with `gen`'s sampling parameters and
/// hands predictions to `sink` in input order. At most
/// `client.config().max_in_flight` requests run at once. A failed request
/// yields an empty prediction marked `failed`.
pub fn generate_predictions<I, F>(
    client: &ChatClient,
    contexts: I,
    gen: &GenerationConfig,
    mut sink: F,
) -> Result<GenerateReport>
where
    I: IntoIterator<Item = Result<ContextRecord>>,
    F: FnMut(Prediction) -> Result<()>,
{
    gen.validate()?;
    let sampling = gen.sampling();
    let workers = client.config().max_in_flight.max(1);
    let sent_before = client.requests_sent();
    let mut report = GenerateReport::default();
    let mut input = contexts.into_iter();
    loop {
        let chunk = input
            .by_ref()
            .take(workers * 4)
            .collect::<Result<Vec<_>>>()?;
        if chunk.is_empty() {
            break;
        }
        let slots: Vec<Mutex<Option<Prediction>>> = chunk.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..workers.min(chunk.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(ctx) = chunk.get(i) else { break };
                    let p = match client.complete(&ctx.input, &sampling) {
                        Ok(text) => Prediction {
                            id: ctx.id.clone(),
                            prediction: text,
                            failed: false,
                        },
                        Err(e) => {
                            log::warn!("generation for `{}` failed: {e}", ctx.id);
                            Prediction {
                                id: ctx.id.clone(),
                                prediction: String::new(),
                                failed: true,
                            }
                        }
                    };
                    *slots[i].lock().unwrap() = Some(p);
                });
            }
        });
        for slot in slots {
            let p = slot.into_inner().unwrap().expect("every slot is filled");
            report.contexts += 1;
            report.failed += p.failed as u64;
            sink(p)?;
        }
    }
    report.requests_sent = client.requests_sent() - sent_before;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let g = GenerationConfig::default();
        assert_eq!((g.top_p, g.temperature), (0.75, 0.95));
        assert!(g.validate().is_ok());
        for bad in [
            GenerationConfig { top_p: 0.0, ..g },
            GenerationConfig { top_p: 1.5, ..g },
            GenerationConfig { temperature: 0.0, ..g },
        ] {
            assert!(bad.validate().is_err());
        }
        assert!(GenerationConfig { top_p: 1.0, ..g }.validate().is_ok());
    }

    #[test]
    fn failed_flag_only_serialized_when_set() {
        let ok = Prediction {
            id: "a".into(),
            prediction: "x".into(),
            failed: false,
        };
        assert_eq!(serde_json::to_string(&ok).unwrap(), r#"{"id":"a","prediction":"x"}"#);
        let bad = Prediction {
            failed: true,
            prediction: String::new(),
            ..ok
        };
        assert_eq!(
            serde_json::to_string(&bad).unwrap(),
            r#"{"id":"a","prediction":"","failed":true}"#
        );
    }
}
