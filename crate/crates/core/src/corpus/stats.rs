use std::borrow::Borrow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnswerKind, Conversation, Speaker};
use crate::metrics::AnswerClassifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_conversations: u64,
    pub n_doctor_turns: u64,
    pub n_question_turns: u64,
    /// One training sample per doctor turn; equals `n_doctor_turns` and is
    /// reported separately so both "sample" readings are visible.
    pub n_expanded_samples: u64,
    pub question_fraction: f64,
    pub suggestion_fraction: f64,
    /// Total utterance count per conversation -> number of conversations.
    pub turn_count_histogram: BTreeMap<usize, u64>,
    pub empty: bool,
}

/// Mergeable partial statistics. Merging is commutative and associative, so
/// shards can be aggregated in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatsAccumulator {
    conversations: u64,
    doctor_turns: u64,
    question_turns: u64,
    histogram: BTreeMap<usize, u64>,
}

impl StatsAccumulator {
    pub fn add(&mut self, conv: &Conversation, classifier: &dyn AnswerClassifier) {
        self.conversations += 1;
        *self.histogram.entry(conv.utterances().len()).or_default() += 1;
        for u in conv.utterances() {
            if u.speaker() == Speaker::Doctor {
                self.doctor_turns += 1;
                if classifier.classify(u.text()) == AnswerKind::Question {
                    self.question_turns += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        self.conversations += other.conversations;
        self.doctor_turns += other.doctor_turns;
        self.question_turns += other.question_turns;
        for (k, v) in &other.histogram {
            *self.histogram.entry(*k).or_default() += v;
        }
    }

    pub fn finish(&self) -> CorpusStats {
        let empty = self.doctor_turns == 0;
        let question_fraction = if empty {
            0.0
        } else {
            self.question_turns as f64 / self.doctor_turns as f64
        };
        CorpusStats {
            n_conversations: self.conversations,
            n_doctor_turns: self.doctor_turns,
            n_question_turns: self.question_turns,
            n_expanded_samples: self.doctor_turns,
            question_fraction,
            suggestion_fraction: if empty { 0.0 } else { 1.0 - question_fraction },
            turn_count_histogram: self.histogram.clone(),
            empty,
        }
    }
}

pub fn corpus_stats<I>(convs: I, classifier: &dyn AnswerClassifier) -> CorpusStats
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Conversation>,
{
    let mut acc = StatsAccumulator::default();
    for conv in convs {
        acc.add(conv.borrow(), classifier);
    }
    acc.finish()
}
