//! Regex rule engine that strips or drops crawl noise from conversations.
//!
//! Patterns use the `regex` crate dialect (no look-around, no
//! backreferences). A pattern that can match the empty string is rejected at
//! load time, as is a replacement that its own pattern would match again.

mod engine;
mod quality;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use regex::{Regex, RegexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{clean_conversation, CleanOutcome, Cleaner, CleaningReport, DropReason};
pub use quality::{score_quality, QualityScore, QualityScorer, RESIDUAL_NOISE_PATTERNS};

/// Reconstructed default rule set (52 rules over all ten categories).
pub const DEFAULT_RULES_JSON: &str = include_str!("default_rules.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCategory {
    MissingContent,
    Image,
    Reward,
    Privacy,
    BrokenJson,
    Link,
    SiteTip,
    VoiceRecording,
    AutoReply,
    Other,
}

impl NoiseCategory {
    /// The nine crawl-noise categories, without `Other`.
    pub const NOISE: [NoiseCategory; 9] = [
        NoiseCategory::MissingContent,
        NoiseCategory::Image,
        NoiseCategory::Reward,
        NoiseCategory::Privacy,
        NoiseCategory::BrokenJson,
        NoiseCategory::Link,
        NoiseCategory::SiteTip,
        NoiseCategory::VoiceRecording,
        NoiseCategory::AutoReply,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleAction {
    StripMatch,
    DropUtterance,
    DropConversation,
    ReplaceWith(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    name: String,
    pattern: String,
    action: RuleAction,
    category: NoiseCategory,
}

#[derive(Debug, Clone)]
pub struct CleaningRule {
    name: String,
    regex: Regex,
    action: RuleAction,
    category: NoiseCategory,
}

impl CleaningRule {
    pub fn new(
        name: impl Into<String>,
        pattern: &str,
        action: RuleAction,
        category: NoiseCategory,
    ) -> Result<Self> {
        let name = name.into();
        let regex = Regex::new(pattern)
            .map_err(|e| Error::Config(format!("rule `{name}`: pattern does not compile: {e}")))?;
        if regex.is_match("") {
            return Err(Error::Config(format!(
                "rule `{name}`: pattern matches the empty string"
            )));
        }
        if let RuleAction::ReplaceWith(s) = &action {
            if regex.is_match(s) {
                return Err(Error::Config(format!(
                    "rule `{name}`: replacement is matched by its own pattern"
                )));
            }
        }
        Ok(CleaningRule {
            name,
            regex,
            action,
            category,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pattern(&self) -> &str {
        self.regex.as_str()
    }

    pub fn regex(&self) -> &Regex {
        &self.regex
    }

    pub fn action(&self) -> &RuleAction {
        &self.action
    }

    pub fn category(&self) -> NoiseCategory {
        self.category
    }
}

impl Serialize for CleaningRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("CleaningRule", 4)?;
        st.serialize_field("name", &self.name)?;
        st.serialize_field("pattern", self.pattern())?;
        st.serialize_field("action", &self.action)?;
        st.serialize_field("category", &self.category)?;
        st.end()
    }
}

/// Ordered, immutable rule list. Cheap to clone and share across threads.
#[derive(Clone)]
pub struct RuleSet {
    rules: Arc<[CleaningRule]>,
    any: Arc<RegexSet>,
}

impl fmt::Debug for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.rules.iter().map(|r| &r.name))
            .finish()
    }
}

impl RuleSet {
    pub fn new(rules: Vec<CleaningRule>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rules {
            if !seen.insert(r.name.as_str()) {
                return Err(Error::Config(format!("duplicate rule name `{}`", r.name)));
            }
        }
        let any = RegexSet::new(rules.iter().map(|r| r.pattern()))
            .map_err(|e| Error::Config(format!("cannot combine rule patterns: {e}")))?;
        Ok(RuleSet {
            rules: rules.into(),
            any: Arc::new(any),
        })
    }

    pub fn empty() -> Self {
        RuleSet::new(Vec::new()).expect("empty rule set")
    }

    /// Parses a rule file body (JSON array of rule objects).
    pub fn from_json(text: &str) -> Result<Self> {
        let specs: Vec<RuleSpec> = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid rule file: {e}")))?;
        let rules = specs
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                CleaningRule::new(&s.name, &s.pattern, s.action, s.category).map_err(|e| match e {
                    Error::Config(msg) => Error::Config(format!("rule #{i}: {msg}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RuleSet::new(rules)
    }

    /// The bundled default rules.
    pub fn default_rules() -> Self {
        RuleSet::from_json(DEFAULT_RULES_JSON).expect("bundled rules are valid")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[CleaningRule] {
        &self.rules
    }

    pub fn get(&self, name: &str) -> Option<&CleaningRule> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// True if any rule matches `text` anywhere.
    pub fn any_match(&self, text: &str) -> bool {
        self.any.is_match(text)
    }
}

/// Loads a rule file. `"default"` selects the bundled rules.
pub fn load_rules(path: impl AsRef<Path>) -> Result<RuleSet> {
    let path = path.as_ref();
    if path.as_os_str() == "default" {
        return Ok(RuleSet::default_rules());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RuleSet::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
