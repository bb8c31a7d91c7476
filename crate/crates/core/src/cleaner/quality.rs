use regex::{Regex, RegexSet};
use serde::{Deserialize, Serialize};

use super::RuleSet;
use crate::corpus::Conversation;
use crate::error::{Error, Result};

/// Encoding damage that no cleaning rule can repair. Used only for scoring.
pub const RESIDUAL_NOISE_PATTERNS: [&str; 5] = ["\u{FFFD}", "锟斤拷", "烫烫烫", "屯屯屯", r"\?{4,}"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub score: f64,
    pub noisy_utterances: usize,
    pub excellent: bool,
}

/// Automatic stand-in for a human "excellent" judgment: the share of
/// utterances free of any diagnostic noise pattern.
#[derive(Debug, Clone)]
pub struct QualityScorer {
    set: RegexSet,
    patterns: Vec<Regex>,
    threshold: f64,
}

impl QualityScorer {
    pub fn new<I, S>(patterns: I, threshold: f64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!(
                "quality threshold must be in [0, 1], got {threshold}"
            )));
        }
        let patterns = patterns
            .into_iter()
            .map(|p| Regex::new(p.as_ref()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("diagnostic pattern: {e}")))?;
        let set = RegexSet::new(patterns.iter().map(Regex::as_str))
            .map_err(|e| Error::Config(format!("diagnostic patterns: {e}")))?;
        Ok(QualityScorer {
            set,
            patterns,
            threshold,
        })
    }

    /// Every pattern of `rules` plus [`RESIDUAL_NOISE_PATTERNS`], threshold 1.0.
    pub fn for_rules(rules: &RuleSet) -> Self {
        let patterns = rules
            .rules()
            .iter()
            .map(|r| r.pattern().to_string())
            .chain(RESIDUAL_NOISE_PATTERNS.iter().map(|s| s.to_string()));
        QualityScorer::new(patterns, 1.0).expect("rule patterns compile")
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!(
                "quality threshold must be in [0, 1], got {threshold}"
            )));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_noisy(&self, text: &str) -> bool {
        self.set
            .matches(text)
            .iter()
            .any(|i| self.patterns[i].find_iter(text).any(|m| !m.is_empty()))
    }

    pub fn score(&self, conv: &Conversation) -> QualityScore {
        let n = conv.utterances().len();
        let noisy = conv
            .utterances()
            .iter()
            .filter(|u| self.is_noisy(u.text()))
            .count();
        let score = if n == 0 { 1.0 } else { 1.0 - noisy as f64 / n as f64 };
        QualityScore {
            score,
            noisy_utterances: noisy,
            excellent: score >= self.threshold,
        }
    }
}

/// Scores with the default rules' diagnostics.
pub fn score_quality(conv: &Conversation) -> QualityScore {
    use std::sync::OnceLock;
    static DEFAULT: OnceLock<QualityScorer> = OnceLock::new();
    DEFAULT
        .get_or_init(|| QualityScorer::for_rules(&RuleSet::default_rules()))
        .score(conv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Speaker;

    fn conv(texts: &[&str]) -> Conversation {
        let turns = texts.iter().enumerate().map(|(i, t)| {
            let s = if i % 2 == 0 { Speaker::Patient } else { Speaker::Doctor };
            (s, *t)
        });
        Conversation::assemble("q", "t", turns, Default::default()).unwrap()
    }

    #[test]
    fn clean_conversation_is_excellent() {
        let q = score_quality(&conv(&["宝宝咳嗽", "多久了？", "三天", "多喝水"]));
        assert_eq!(q.score, 1.0);
        assert!(q.excellent);
    }

    #[test]
    fn one_noisy_of_four() {
        let q = score_quality(&conv(&["宝宝咳嗽[图片]", "多久了？", "三天", "多喝水"]));
        assert_eq!(q.score, 0.75);
        assert!(!q.excellent);
        let lenient = QualityScorer::for_rules(&RuleSet::default_rules())
            .with_threshold(0.7)
            .unwrap();
        assert!(lenient.score(&conv(&["宝宝咳嗽[图片]", "多久了？", "三天", "多喝水"])).excellent);
    }

    #[test]
    fn residual_noise_counts() {
        let q = score_quality(&conv(&["锟斤拷锟斤拷", "你好"]));
        assert_eq!(q.noisy_utterances, 1);
    }
}
