use std::sync::Arc;

use crate::corpus::AnswerKind;
use crate::error::{Error, Result};

/// Labels a doctor answer as a question or a suggestion.
///
/// Implementations must be total (every string gets a label) and
/// deterministic.
pub trait AnswerClassifier: Send + Sync {
    fn classify(&self, text: &str) -> AnswerKind;
    fn name(&self) -> &str;
}

pub const DEFAULT_INTERROGATIVES: [&str; 8] =
    ["吗", "呢", "多久", "是否", "有没有", "什么", "哪", "请问"];

const CLAUSE_BREAKS: &[char] = &[
    '。', '！', '!', '；', ';', '，', ',', '、', '…', '~', '～', '.', ' ', '\t',
];

/// Question mark anywhere, or an interrogative word opening or closing a
/// clause.
#[derive(Debug, Clone)]
pub struct RuleClassifier {
    lexicon: Vec<String>,
}

impl Default for RuleClassifier {
    fn default() -> Self {
        RuleClassifier::with_lexicon(DEFAULT_INTERROGATIVES)
    }
}

impl RuleClassifier {
    pub fn with_lexicon<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RuleClassifier {
            lexicon: words
                .into_iter()
                .map(Into::into)
                .filter(|w: &String| !w.is_empty())
                .collect(),
        }
    }

    pub fn lexicon(&self) -> &[String] {
        &self.lexicon
    }
}

impl AnswerClassifier for RuleClassifier {
    fn classify(&self, text: &str) -> AnswerKind {
        if text.contains(['？', '?']) {
            return AnswerKind::Question;
        }
        let interrogative = text
            .split(CLAUSE_BREAKS)
            .map(str::trim)
            .filter(|clause| !clause.is_empty())
            .any(|clause| {
                self.lexicon
                    .iter()
                    .any(|w| clause.starts_with(w.as_str()) || clause.ends_with(w.as_str()))
            });
        if interrogative {
            AnswerKind::Question
        } else {
            AnswerKind::Suggestion
        }
    }

    fn name(&self) -> &str {
        "rule"
    }
}

/// Question iff the text contains a question mark.
#[derive(Debug, Clone, Copy, Default)]
pub struct PunctuationClassifier;

impl AnswerClassifier for PunctuationClassifier {
    fn classify(&self, text: &str) -> AnswerKind {
        if text.contains(['？', '?']) {
            AnswerKind::Question
        } else {
            AnswerKind::Suggestion
        }
    }

    fn name(&self) -> &str {
        "punct"
    }
}

/// Looks up a built-in classifier by name (`rule` or `punct`).
pub fn classifier_by_name(name: &str) -> Result<Arc<dyn AnswerClassifier>> {
    match name {
        "rule" | "default" => Ok(Arc::new(RuleClassifier::default())),
        "punct" | "punctuation" => Ok(Arc::new(PunctuationClassifier)),
        other => Err(Error::Config(format!(
            "unknown classifier `{other}` (valid: rule, punct)"
        ))),
    }
}

/// Convenience wrapper over the default rule classifier.
pub fn classify_answer(text: &str) -> AnswerKind {
    RuleClassifier::default().classify(text)
}
