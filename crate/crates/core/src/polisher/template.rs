use std::path::Path;

use crate::corpus::{Conversation, Speaker};
use crate::error::{Error, Result};

pub const HISTORY: &str = "{history}";
pub const ANSWER: &str = "{answer}";

/// Reconstructed default polishing prompt. Override it with a template file
/// when the exact wording matters.
pub const DEFAULT_TEMPLATE: &str = "你是一名经验丰富的全科医生。下面是一段真实的医患多轮对话，以及医生在对话最后给出的简短回复。\n\
请结合对话历史中患者描述的情况，将医生的回复改写为更加详细、专业、礼貌的健康建议：说明可能的原因，给出具体可行的处理建议，并提醒在什么情况下需要及时就医。\n\
要求：与对话历史保持一致，不要编造对话中没有出现的检查结果，不要向患者提出新的问题，只输出改写后的医生回复。\n\n\
对话历史：\n{history}\n\n医生的回复：\n{answer}\n\n改写后的医生回复：";

/// Prompt text with exactly one `{history}` and one `{answer}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::new("default", DEFAULT_TEMPLATE).expect("default template is valid")
    }
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        for placeholder in [HISTORY, ANSWER] {
            let n = text.matches(placeholder).count();
            if n != 1 {
                return Err(Error::Config(format!(
                    "template must contain {placeholder} exactly once (found {n})"
                )));
            }
        }
        Ok(PromptTemplate {
            name: name.into(),
            text,
        })
    }

    /// Loads a template file; its name is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        PromptTemplate::new(name, text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Renders the prompt for the doctor utterance at `target_index`.
    /// `{history}` becomes the role-prefixed lines before the target,
    /// `{answer}` the target text.
    pub fn render(&self, conv: &Conversation, target_index: usize) -> Result<String> {
        let utterances = conv.utterances();
        let target = utterances.get(target_index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "utterance index {target_index} out of range for `{}`",
                conv.id()
            ))
        })?;
        if target.speaker() != Speaker::Doctor {
            return Err(Error::InvalidArgument(format!(
                "utterance {target_index} of `{}` is not a doctor turn",
                conv.id()
            )));
        }
        let history = utterances[..target_index]
            .iter()
            .map(|u| format!("{}{}", u.speaker().prefix(), u.text()))
            .collect::<Vec<_>>()
            .join("\n");

        // Splice in one pass so placeholder-like text inside the dialogue is
        // never substituted again.
        let h = self.text.find(HISTORY).expect("validated");
        let a = self.text.find(ANSWER).expect("validated");
        let mut parts = [(h, HISTORY.len(), history.as_str()), (a, ANSWER.len(), target.text())];
        parts.sort_by_key(|p| p.0);
        let mut out = String::with_capacity(self.text.len() + history.len() + target.text().len());
        let mut pos = 0;
        for (at, len, value) in parts {
            out.push_str(&self.text[pos..at]);
            out.push_str(value);
            pos = at + len;
        }
        out.push_str(&self.text[pos..]);
        Ok(out)
    }
}
