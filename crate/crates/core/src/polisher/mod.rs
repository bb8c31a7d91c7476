//! LLM polishing of doctor suggestions.
//!
//! Each selected suggestion turn is rewritten through a chat-completion
//! endpoint using a prompt built from the preceding dialogue. Question turns
//! are never sent; failed requests keep the original text. Responses are
//! cached by prompt hash so reruns cost nothing.

mod cache;
mod client;
mod template;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, PolishCache, PolishCacheEntry, CACHE_FILE};
pub use client::{ChatClient, LlmClientConfig, RateLimiter, Sampling, DEFAULT_API_KEY_ENV};
pub use template::{PromptTemplate, ANSWER, DEFAULT_TEMPLATE, HISTORY};

use crate::corpus::{AnswerKind, Conversation, Speaker};
use crate::error::Error;
use crate::metrics::AnswerClassifier;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PolishError {
    #[error("transient failure after {attempts} attempts: {message}")]
    Transient { attempts: u32, message: String },
    #[error("fatal client error: {0}")]
    Fatal(String),
    #[error("endpoint returned empty text")]
    Empty,
    #[error("API key variable `{0}` is not set")]
    MissingApiKey(String),
}

impl PolishError {
    /// Errors that must abort a whole run rather than one turn.
    pub fn is_fatal(&self) -> bool {
        matches!(self, PolishError::Fatal(_) | PolishError::MissingApiKey(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolishPolicy {
    /// Every suggestion turn.
    #[default]
    AllSuggestions,
    /// Only the last suggestion turn of each conversation.
    FinalSuggestionOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolishStatus {
    /// Nothing was selected for polishing.
    Untouched,
    Polished,
    /// Some selected turns failed and kept their original text.
    Partial,
    /// Every selected turn failed.
    Unpolished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolishedConversation {
    pub conversation: Conversation,
    pub status: PolishStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolishReport {
    pub conversations: u64,
    pub polished_turns: u64,
    pub failed_turns: u64,
    pub skipped_question_turns: u64,
    pub skipped_policy_turns: u64,
    pub cache_hits: u64,
    pub unpolished_conversations: u64,
    pub partial_conversations: u64,
    /// Input conversations passed over because a previous run finished them.
    pub resumed_skipped: u64,
}

#[derive(Debug, Default)]
struct TurnCounts {
    polished: u64,
    failed: u64,
    questions: u64,
    policy: u64,
    cache_hits: u64,
}

/// A run stopped by a fatal error. `checkpoint` is the id of the last
/// conversation fully handed to the sink; pass it back as `resume_after`.
#[derive(Debug)]
pub struct PolishAbort {
    pub error: Error,
    pub checkpoint: Option<String>,
    pub report: PolishReport,
}

/// Sends one prompt through the cache. The flag is true on a cache hit.
pub fn polish_answer(
    client: &ChatClient,
    cache: &PolishCache,
    template_name: &str,
    prompt: &str,
) -> Result<(String, bool), PolishError> {
    let key = cache_key(template_name, prompt);
    cache.get_or_fetch(&key, || client.complete(prompt, &client.default_sampling()))
}

pub struct Polisher {
    client: ChatClient,
    cache: PolishCache,
    template: PromptTemplate,
    classifier: Arc<dyn AnswerClassifier>,
    policy: PolishPolicy,
}

impl Polisher {
    pub fn new(
        client: ChatClient,
        cache: PolishCache,
        template: PromptTemplate,
        classifier: Arc<dyn AnswerClassifier>,
        policy: PolishPolicy,
    ) -> Self {
        Polisher {
            client,
            cache,
            template,
            classifier,
            policy,
        }
    }

    pub fn client(&self) -> &ChatClient {
        &self.client
    }

    pub fn cache(&self) -> &PolishCache {
        &self.cache
    }

    /// Indices of the doctor turns this policy sends out, and how many
    /// questions / policy-excluded suggestions were passed over.
    fn select(&self, conv: &Conversation) -> (Vec<usize>, u64, u64) {
        let mut suggestions = Vec::new();
        let mut questions = 0;
        for (i, u) in conv.doctor_turns() {
            match self.classifier.classify(u.text()) {
                AnswerKind::Question => questions += 1,
                AnswerKind::Suggestion => suggestions.push(i),
            }
        }
        let mut excluded = 0;
        if self.policy == PolishPolicy::FinalSuggestionOnly && suggestions.len() > 1 {
            excluded = (suggestions.len() - 1) as u64;
            suggestions = vec![*suggestions.last().unwrap()];
        }
        (suggestions, questions, excluded)
    }

    fn polish_one(&self, conv: &Conversation) -> Result<(PolishedConversation, TurnCounts), PolishError> {
        let (targets, questions, policy) = self.select(conv);
        let mut counts = TurnCounts {
            questions,
            policy,
            ..Default::default()
        };
        let mut out = conv.clone();
        for &i in &targets {
            debug_assert_eq!(conv.utterances()[i].speaker(), Speaker::Doctor);
            // History always comes from the original turns.
            let prompt = self
                .template
                .render(conv, i)
                .map_err(|e| PolishError::Fatal(e.to_string()))?;
            match polish_answer(&self.client, &self.cache, self.template.name(), &prompt) {
                Ok((text, hit)) => {
                    if out.replace_text(i, &text).is_ok() {
                        counts.polished += 1;
                        counts.cache_hits += hit as u64;
                    } else {
                        counts.failed += 1;
                    }
                }
                Err(e) if e.is_fatal() => return Err(e),
                Err(e) => {
                    log::warn!("turn {i} of `{}` left unpolished: {e}", conv.id());
                    counts.failed += 1;
                }
            }
        }
        let status = match (targets.len() as u64, counts.polished) {
            (0, _) => PolishStatus::Untouched,
            (n, p) if p == n => PolishStatus::Polished,
            (_, 0) => PolishStatus::Unpolished,
            _ => PolishStatus::Partial,
        };
        Ok((
            PolishedConversation {
                conversation: out,
                status,
            },
            counts,
        ))
    }

    /// Polishes one conversation. Only fatal client errors are returned;
    /// per-turn failures keep the original text.
    pub fn polish_conversation(&self, conv: &Conversation) -> Result<PolishedConversation, PolishError> {
        self.polish_one(conv).map(|(p, _)| p)
    }

    /// Streams `convs` through the polisher, handing results to `sink` in
    /// input order. Up to `max_in_flight` conversations are in progress at
    /// once. With `resume_after`, input up to and including that id is
    /// skipped.
    pub fn polish_corpus<I, F>(
        &self,
        convs: I,
        resume_after: Option<&str>,
        mut sink: F,
    ) -> Result<PolishReport, PolishAbort>
    where
        I: IntoIterator<Item = Conversation>,
        F: FnMut(PolishedConversation) -> crate::Result<()>,
    {
        let mut report = PolishReport::default();
        let mut checkpoint: Option<String> = None;
        let mut input = convs.into_iter();

        if let Some(resume_id) = resume_after {
            let mut found = false;
            for conv in input.by_ref() {
                report.resumed_skipped += 1;
                if conv.id() == resume_id {
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(PolishAbort {
                    error: Error::InvalidArgument(format!(
                        "checkpoint id `{resume_id}` not found in input"
                    )),
                    checkpoint: Some(resume_id.to_string()),
                    report,
                });
            }
            checkpoint = Some(resume_id.to_string());
        }

        let workers = self.client.config().max_in_flight.max(1);
        loop {
            let chunk: Vec<Conversation> = input.by_ref().take(workers * 4).collect();
            if chunk.is_empty() {
                return Ok(report);
            }
            let results = self.polish_chunk(&chunk, workers);
            for result in results {
                // Slots are claimed in order, so an unstarted slot can only
                // follow the fatal error that stopped the workers.
                let outcome = result.expect("slot before a fatal error is filled");
                let (polished, counts) = match outcome {
                    Ok(v) => v,
                    Err(e) => {
                        return Err(PolishAbort {
                            error: Error::Polish(e),
                            checkpoint,
                            report,
                        })
                    }
                };
                let id = polished.conversation.id().to_string();
                let status = polished.status;
                if let Err(e) = sink(polished) {
                    return Err(PolishAbort {
                        error: e,
                        checkpoint,
                        report,
                    });
                }
                report.conversations += 1;
                report.polished_turns += counts.polished;
                report.failed_turns += counts.failed;
                report.skipped_question_turns += counts.questions;
                report.skipped_policy_turns += counts.policy;
                report.cache_hits += counts.cache_hits;
                match status {
                    PolishStatus::Unpolished => report.unpolished_conversations += 1,
                    PolishStatus::Partial => report.partial_conversations += 1,
                    _ => {}
                }
                checkpoint = Some(id);
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn polish_chunk(
        &self,
        chunk: &[Conversation],
        workers: usize,
    ) -> Vec<Option<Result<(PolishedConversation, TurnCounts), PolishError>>> {
        let slots: Vec<Mutex<Option<_>>> = chunk.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        thread::scope(|s| {
            for _ in 0..workers.min(chunk.len()) {
                s.spawn(|| loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= chunk.len() {
                        break;
                    }
                    let r = self.polish_one(&chunk[i]);
                    if r.is_err() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    *slots[i].lock().unwrap() = Some(r);
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().unwrap()).collect()
    }
}
