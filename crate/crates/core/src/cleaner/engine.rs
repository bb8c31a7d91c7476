use std::borrow::Cow;

use indexmap::IndexMap;
use regex::NoExpand;
use serde::{Deserialize, Serialize};

use super::quality::QualityScorer;
use super::{RuleAction, RuleSet};
use crate::corpus::{Conversation, Rejection, Speaker};
use crate::error::Result;
use crate::parallel::{next_chunk, Workers, CHUNK_SIZE};

/// Rule passes per utterance before it is declared unstable and dropped.
const MAX_PASSES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum DropReason {
    /// A `drop_conversation` rule fired.
    Rule { name: String },
    /// What survived cleaning is not a valid conversation.
    Invalid { detail: String },
    /// Cleaning lowered the quality score (merging around a dropped
    /// utterance concentrated residual noise).
    QualityRegression,
}

/// Aggregated cleaning statistics. Counts merge by addition; the two rates
/// are recomputed from the counts after every merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    /// Utterances each rule fired on, in rule order. A `drop_conversation`
    /// hit counts once.
    pub rule_hits: IndexMap<String, u64>,
    pub utterances_dropped: u64,
    pub conversations_kept: u64,
    pub conversations_dropped: u64,
    pub dropped_by_rule: u64,
    pub dropped_invalid: u64,
    pub dropped_quality_regression: u64,
    /// Kept conversations whose text changed.
    pub conversations_modified: u64,
    pub excellent_before: u64,
    pub excellent_after: u64,
    /// Excellent share of the input conversations.
    pub excellent_rate_before: f64,
    /// Excellent share of the kept conversations.
    pub excellent_rate_after: f64,
    pub quality_threshold: f64,
}

impl CleaningReport {
    pub fn new(rules: &RuleSet, quality_threshold: f64) -> Self {
        CleaningReport {
            rule_hits: rules.rules().iter().map(|r| (r.name().to_string(), 0)).collect(),
            utterances_dropped: 0,
            conversations_kept: 0,
            conversations_dropped: 0,
            dropped_by_rule: 0,
            dropped_invalid: 0,
            dropped_quality_regression: 0,
            conversations_modified: 0,
            excellent_before: 0,
            excellent_after: 0,
            excellent_rate_before: 0.0,
            excellent_rate_after: 0.0,
            quality_threshold,
        }
    }

    pub fn conversations_in(&self) -> u64 {
        self.conversations_kept + self.conversations_dropped
    }

    pub fn total_hits(&self) -> u64 {
        self.rule_hits.values().sum()
    }

    pub fn merge(&mut self, other: &CleaningReport) {
        for (name, n) in &other.rule_hits {
            *self.rule_hits.entry(name.clone()).or_default() += n;
        }
        self.utterances_dropped += other.utterances_dropped;
        self.conversations_kept += other.conversations_kept;
        self.conversations_dropped += other.conversations_dropped;
        self.dropped_by_rule += other.dropped_by_rule;
        self.dropped_invalid += other.dropped_invalid;
        self.dropped_quality_regression += other.dropped_quality_regression;
        self.conversations_modified += other.conversations_modified;
        self.excellent_before += other.excellent_before;
        self.excellent_after += other.excellent_after;
        self.update_rates();
    }

    fn update_rates(&mut self) {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        self.excellent_rate_before = ratio(self.excellent_before, self.conversations_in());
        self.excellent_rate_after = ratio(self.excellent_after, self.conversations_kept);
    }
}

/// Per-conversation counts, indexed by rule position.
#[derive(Debug, Clone, Default)]
struct Tally {
    hits: Vec<u64>,
    utterances_dropped: u64,
    kept: u64,
    dropped_rule: u64,
    dropped_invalid: u64,
    dropped_regression: u64,
    modified: u64,
    excellent_before: u64,
    excellent_after: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        if self.hits.len() < o.hits.len() {
            self.hits.resize(o.hits.len(), 0);
        }
        for (a, b) in self.hits.iter_mut().zip(&o.hits) {
            *a += b;
        }
        self.utterances_dropped += o.utterances_dropped;
        self.kept += o.kept;
        self.dropped_rule += o.dropped_rule;
        self.dropped_invalid += o.dropped_invalid;
        self.dropped_regression += o.dropped_regression;
        self.modified += o.modified;
        self.excellent_before += o.excellent_before;
        self.excellent_after += o.excellent_after;
    }

    fn hit(&mut self, rule: usize, n_rules: usize) {
        if self.hits.is_empty() {
            self.hits = vec![0; n_rules];
        }
        self.hits[rule] += 1;
    }

    fn into_report(self, rules: &RuleSet, threshold: f64) -> CleaningReport {
        let mut r = CleaningReport::new(rules, threshold);
        for (slot, n) in r.rule_hits.values_mut().zip(&self.hits) {
            *slot = *n;
        }
        r.utterances_dropped = self.utterances_dropped;
        r.conversations_kept = self.kept;
        r.dropped_by_rule = self.dropped_rule;
        r.dropped_invalid = self.dropped_invalid;
        r.dropped_quality_regression = self.dropped_regression;
        r.conversations_dropped = self.dropped_rule + self.dropped_invalid + self.dropped_regression;
        r.conversations_modified = self.modified;
        r.excellent_before = self.excellent_before;
        r.excellent_after = self.excellent_after;
        r.update_rates();
        r
    }
}

enum TextOutcome {
    Unchanged,
    Modified(String),
    Drop,
    DropConversation(usize),
}

#[derive(Debug, Clone)]
pub struct CleanOutcome {
    pub conversation: Option<Conversation>,
    pub dropped: Option<DropReason>,
    pub report: CleaningReport,
}

/// Applies a [`RuleSet`] and tracks quality before and after.
#[derive(Debug, Clone)]
pub struct Cleaner {
    rules: RuleSet,
    scorer: QualityScorer,
}

impl Cleaner {
    /// Scores with [`QualityScorer::for_rules`].
    pub fn new(rules: RuleSet) -> Self {
        let scorer = QualityScorer::for_rules(&rules);
        Cleaner { rules, scorer }
    }

    pub fn with_scorer(rules: RuleSet, scorer: QualityScorer) -> Self {
        Cleaner { rules, scorer }
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn scorer(&self) -> &QualityScorer {
        &self.scorer
    }

    pub fn empty_report(&self) -> CleaningReport {
        CleaningReport::new(&self.rules, self.scorer.threshold())
    }

    /// Runs every rule in order, repeating until a pass changes nothing.
    /// Hits are recorded once per rule per utterance.
    fn clean_text(&self, text: &str, tally: &mut Tally) -> TextOutcome {
        if !self.rules.any_match(text) {
            return TextOutcome::Unchanged;
        }
        let n_rules = self.rules.len();
        let mut fired: Vec<usize> = Vec::new();
        let record = |i: usize, fired: &mut Vec<usize>| {
            if !fired.contains(&i) {
                fired.push(i);
            }
        };
        let mut cur = text.to_string();
        let mut outcome = None;
        'passes: for _ in 0..MAX_PASSES {
            let mut changed = false;
            for (i, rule) in self.rules.rules().iter().enumerate() {
                let replaced = match rule.action() {
                    RuleAction::DropConversation | RuleAction::DropUtterance => {
                        if rule.regex().is_match(&cur) {
                            record(i, &mut fired);
                            outcome = Some(match rule.action() {
                                RuleAction::DropConversation => TextOutcome::DropConversation(i),
                                _ => TextOutcome::Drop,
                            });
                            break 'passes;
                        }
                        continue;
                    }
                    RuleAction::StripMatch => rule.regex().replace_all(&cur, ""),
                    RuleAction::ReplaceWith(s) => rule.regex().replace_all(&cur, NoExpand(s)),
                };
                if let Cow::Owned(next) = replaced {
                    if next != cur {
                        record(i, &mut fired);
                        cur = next;
                        changed = true;
                    }
                }
            }
            if !changed {
                outcome = Some(if cur == text {
                    TextOutcome::Unchanged
                } else {
                    TextOutcome::Modified(cur.clone())
                });
                break;
            }
            cur = collapse_whitespace(&cur);
            if cur.is_empty() {
                outcome = Some(TextOutcome::Drop);
                break;
            }
        }
        for i in fired {
            tally.hit(i, n_rules);
        }
        outcome.unwrap_or_else(|| {
            log::warn!("rules did not converge on an utterance; dropping it");
            TextOutcome::Drop
        })
    }

    fn clean_one(&self, conv: &Conversation) -> (Option<Conversation>, Option<DropReason>, Tally) {
        let mut tally = Tally::default();
        let before = self.scorer.score(conv);
        tally.excellent_before += before.excellent as u64;

        let mut current: Cow<Conversation> = Cow::Borrowed(conv);
        loop {
            let mut turns: Vec<(Speaker, Cow<str>)> = Vec::with_capacity(current.utterances().len());
            let mut changed = false;
            for u in current.utterances() {
                match self.clean_text(u.text(), &mut tally) {
                    TextOutcome::Unchanged => turns.push((u.speaker(), Cow::Borrowed(u.text()))),
                    TextOutcome::Modified(s) => {
                        changed = true;
                        turns.push((u.speaker(), Cow::Owned(s)));
                    }
                    TextOutcome::Drop => {
                        changed = true;
                        tally.utterances_dropped += 1;
                    }
                    TextOutcome::DropConversation(i) => {
                        tally.dropped_rule += 1;
                        let name = self.rules.rules()[i].name().to_string();
                        return (None, Some(DropReason::Rule { name }), tally);
                    }
                }
            }
            if !changed {
                break;
            }
            let n_turns = turns.len();
            let rebuilt = match Conversation::assemble(
                current.id(),
                current.source(),
                turns,
                current.meta().clone(),
            ) {
                Ok(c) => c,
                Err(rejection) => return (None, Some(invalid(rejection)), drop_invalid(tally)),
            };
            let merged = rebuilt.utterances().len() != n_turns;
            current = Cow::Owned(rebuilt);
            // Merged texts may form new matches across the join.
            if !merged {
                break;
            }
        }

        match current {
            Cow::Borrowed(_) => {
                tally.kept += 1;
                tally.excellent_after += before.excellent as u64;
                (Some(conv.clone()), None, tally)
            }
            Cow::Owned(cleaned) => {
                let after = self.scorer.score(&cleaned);
                if after.score < before.score {
                    tally.dropped_regression += 1;
                    return (None, Some(DropReason::QualityRegression), tally);
                }
                tally.kept += 1;
                tally.modified += 1;
                tally.excellent_after += after.excellent as u64;
                (Some(cleaned), None, tally)
            }
        }
    }

    pub fn clean_conversation(&self, conv: &Conversation) -> CleanOutcome {
        let (conversation, dropped, tally) = self.clean_one(conv);
        CleanOutcome {
            conversation,
            dropped,
            report: tally.into_report(&self.rules, self.scorer.threshold()),
        }
    }

    /// Cleans a batch in parallel, keeping input order.
    pub fn clean_batch(
        &self,
        convs: Vec<Conversation>,
        workers: &Workers,
    ) -> (Vec<Conversation>, CleaningReport) {
        let results = workers.map_ordered(convs, |c| self.clean_one(&c));
        let mut total = Tally::default();
        let mut kept = Vec::with_capacity(results.len());
        for (conv, _, tally) in results {
            total.add(&tally);
            kept.extend(conv);
        }
        (kept, total.into_report(&self.rules, self.scorer.threshold()))
    }

    /// Streams `convs` through the rules in chunks, handing kept
    /// conversations to `sink` in input order.
    pub fn clean_stream<I, F>(&self, convs: I, workers: &Workers, mut sink: F) -> Result<CleaningReport>
    where
        I: IntoIterator<Item = Conversation>,
        F: FnMut(Conversation) -> Result<()>,
    {
        let mut input = convs.into_iter();
        let mut total = Tally::default();
        loop {
            let chunk = next_chunk(&mut input, CHUNK_SIZE);
            if chunk.is_empty() {
                break;
            }
            for (conv, _, tally) in workers.map_ordered(chunk, |c| self.clean_one(&c)) {
                total.add(&tally);
                if let Some(c) = conv {
                    sink(c)?;
                }
            }
        }
        Ok(total.into_report(&self.rules, self.scorer.threshold()))
    }
}

fn invalid(rejection: Rejection) -> DropReason {
    DropReason::Invalid {
        detail: rejection.to_string(),
    }
}

fn drop_invalid(mut tally: Tally) -> Tally {
    tally.dropped_invalid += 1;
    tally
}

/// Folds whitespace runs to a single space and trims.
fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut gap = false;
    for c in text.trim().chars() {
        if c.is_whitespace() {
            if !gap {
                out.push(' ');
            }
            gap = true;
        } else {
            out.push(c);
            gap = false;
        }
    }
    out
}

/// One-shot cleaning of a single conversation.
pub fn clean_conversation(conv: &Conversation, rules: &RuleSet) -> CleanOutcome {
    Cleaner::new(rules.clone()).clean_conversation(conv)
}

#[cfg(test)]
mod tests {
    use super::super::{CleaningRule, NoiseCategory};
    use super::*;

    fn conv(texts: &[&str]) -> Conversation {
        let turns = texts.iter().enumerate().map(|(i, t)| {
            let s = if i % 2 == 0 { Speaker::Patient } else { Speaker::Doctor };
            (s, *t)
        });
        Conversation::assemble("c", "t", turns, Default::default()).unwrap()
    }

    fn rules(specs: &[(&str, &str, RuleAction)]) -> RuleSet {
        RuleSet::new(
            specs
                .iter()
                .map(|(n, p, a)| CleaningRule::new(*n, p, a.clone(), NoiseCategory::Other).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn texts(c: &Conversation) -> Vec<&str> {
        c.utterances().iter().map(|u| u.text()).collect()
    }

    #[test]
    fn strips_image_tag() {
        let r = rules(&[("img", r"\[图片\]", RuleAction::StripMatch)]);
        let out = clean_conversation(&conv(&["你好[图片]请看", "好的"]), &r);
        assert_eq!(texts(out.conversation.as_ref().unwrap()), ["你好请看", "好的"]);
        assert_eq!(out.report.rule_hits["img"], 1);
    }

    #[test]
    fn voice_only_doctor_turn_cascades_to_drop() {
        let r = rules(&[("voice", r"\[语音\]", RuleAction::StripMatch)]);
        let out = clean_conversation(&conv(&["头疼", "[语音]"]), &r);
        assert!(out.conversation.is_none());
        assert_eq!(out.report.utterances_dropped, 1);
        assert_eq!(out.report.conversations_dropped, 1);
        assert!(matches!(out.dropped, Some(DropReason::Invalid { .. })));
    }

    #[test]
    fn dropped_middle_turn_merges_neighbors() {
        let r = rules(&[("voice", r"\[语音\]", RuleAction::StripMatch)]);
        let out = clean_conversation(&conv(&["头疼", "[语音]", "还发烧", "多喝水"]), &r);
        assert_eq!(texts(out.conversation.as_ref().unwrap()), ["头疼 还发烧", "多喝水"]);
    }

    #[test]
    fn untouched_conversation_is_identical() {
        let c = conv(&["头疼  两天", "多喝水"]);
        let out = clean_conversation(&c, &RuleSet::default_rules());
        assert_eq!(out.conversation.as_ref(), Some(&c));
        assert_eq!(out.report.total_hits(), 0);
        assert_eq!(out.report.conversations_modified, 0);
    }

    #[test]
    fn nested_noise_reaches_fixpoint() {
        let r = rules(&[("img", r"\[图片\]", RuleAction::StripMatch)]);
        let out = clean_conversation(&conv(&["看[图[图片]片]这里", "好"]), &r);
        let cleaned = out.conversation.unwrap();
        assert_eq!(texts(&cleaned), ["看这里", "好"]);
        let again = clean_conversation(&cleaned, &r);
        assert_eq!(again.conversation.as_ref(), Some(&cleaned));
        assert_eq!(again.report.total_hits(), 0);
    }

    #[test]
    fn drop_conversation_short_circuits() {
        let r = rules(&[
            ("phone", r"1[3-9][0-9]{9}", RuleAction::DropConversation),
            ("img", r"\[图片\]", RuleAction::StripMatch),
        ]);
        let out = clean_conversation(&conv(&["电话13812345678", "[图片]好"]), &r);
        assert!(out.conversation.is_none());
        assert_eq!(
            out.dropped,
            Some(DropReason::Rule {
                name: "phone".into()
            })
        );
        assert_eq!(out.report.rule_hits["img"], 0);
    }

    #[test]
    fn replacement_and_whitespace() {
        let r = rules(&[("nbsp", "&nbsp;", RuleAction::ReplaceWith(" ".into()))]);
        let out = clean_conversation(&conv(&["多喝&nbsp;&nbsp;水", "好"]), &r);
        assert_eq!(texts(out.conversation.as_ref().unwrap())[0], "多喝 水");
    }

    #[test]
    fn link_hits_counted_per_conversation() {
        let r = RuleSet::default_rules();
        let cleaner = Cleaner::new(r);
        let convs: Vec<Conversation> = (0..10)
            .map(|i| {
                if i < 4 {
                    conv(&["头疼", "详见https://example.com/a 多休息"])
                } else {
                    conv(&["头疼", "多休息"])
                }
            })
            .collect();
        let (kept, report) = cleaner.clean_batch(convs, &Workers::sequential());
        assert_eq!(kept.len(), 10);
        assert_eq!(report.rule_hits["http_url"], 4);
        assert_eq!(report.conversations_in(), 10);
    }

    #[test]
    fn every_conversation_dropped_by_privacy_rule() {
        let r = rules(&[("id", r"[0-9]{17}[0-9Xx]", RuleAction::DropConversation)]);
        let cleaner = Cleaner::new(r);
        let convs = vec![conv(&["110101199001011234", "好"]); 5];
        let (kept, report) = cleaner.clean_batch(convs, &Workers::sequential());
        assert!(kept.is_empty());
        assert_eq!(report.conversations_dropped, 5);
        assert_eq!(report.excellent_rate_after, 0.0);
    }

    #[test]
    fn regression_guard() {
        // Dropping the middle doctor turn merges a residual-noise patient
        // turn with a clean one; the merged turn stays noisy.
        let r = rules(&[("voice", r"\[语音\]", RuleAction::DropUtterance)]);
        let scorer = QualityScorer::new(["\\[语音\\]", "锟斤拷"], 1.0).unwrap();
        let cleaner = Cleaner::with_scorer(r, scorer);
        let c = conv(&["锟斤拷", "[语音]", "头疼", "锟斤拷多喝水"]);
        let out = cleaner.clean_conversation(&c);
        assert_eq!(out.dropped, Some(DropReason::QualityRegression));
    }

    #[test]
    fn report_merge_recomputes_rates() {
        let r = RuleSet::empty();
        let cleaner = Cleaner::new(r);
        let a = cleaner.clean_conversation(&conv(&["a", "b"])).report;
        let mut total = cleaner.empty_report();
        total.merge(&a);
        total.merge(&a);
        assert_eq!(total.conversations_kept, 2);
        assert_eq!(total.excellent_rate_before, 1.0);
    }

    #[test]
    fn collapse() {
        assert_eq!(collapse_whitespace("  a \t b\u{3000}c "), "a b c");
    }
}
