//! Proactive questioning ability (PQA).
//!
//! With `Qtp` = both target and prediction are questions, `Qt~p` = question
//! target with suggestion prediction, and `Q~t~p` = both suggestions:
//!
//! ```text
//! P = Qtp / (Qtp + Qt~p)
//! R = Qtp / (Qtp + Q~t~p)
//! PQA = 2PR / (P + R)
//! ```
//!
//! `PaperVerbatim` evaluates exactly these cells. Note that R's denominator
//! uses the both-suggestion cell, not the usual false-negative cell.
//! `ConventionalF1` is the standard question-class F1.

use serde::{Deserialize, Serialize};

use crate::corpus::AnswerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PqaConfusion {
    /// Target question, prediction question.
    pub q_tp: u64,
    /// Target question, prediction suggestion.
    pub q_t_notp: u64,
    /// Target suggestion, prediction question.
    pub q_nott_p: u64,
    /// Target suggestion, prediction suggestion.
    pub q_nott_notp: u64,
}

impl PqaConfusion {
    pub fn record(&mut self, target: AnswerKind, prediction: AnswerKind) {
        use AnswerKind::*;
        match (target, prediction) {
            (Question, Question) => self.q_tp += 1,
            (Question, Suggestion) => self.q_t_notp += 1,
            (Suggestion, Question) => self.q_nott_p += 1,
            (Suggestion, Suggestion) => self.q_nott_notp += 1,
        }
    }

    pub fn merge(&mut self, other: &PqaConfusion) {
        self.q_tp += other.q_tp;
        self.q_t_notp += other.q_t_notp;
        self.q_nott_p += other.q_nott_p;
        self.q_nott_notp += other.q_nott_notp;
    }

    pub fn total(&self) -> u64 {
        self.q_tp + self.q_t_notp + self.q_nott_p + self.q_nott_notp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PqaVariant {
    #[default]
    PaperVerbatim,
    ConventionalF1,
}

impl PqaVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" | "paper_verbatim" => Some(PqaVariant::PaperVerbatim),
            "conventional" | "conventional_f1" | "f1" => Some(PqaVariant::ConventionalF1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqaScore {
    pub pqa: f64,
    pub precision: f64,
    pub recall: f64,
    /// A denominator (including P + R) was zero; the affected values are 0.
    pub degenerate: bool,
}

pub fn pqa(conf: &PqaConfusion, variant: PqaVariant) -> PqaScore {
    let (p_den, r_den) = match variant {
        PqaVariant::PaperVerbatim => (conf.q_tp + conf.q_t_notp, conf.q_tp + conf.q_nott_notp),
        PqaVariant::ConventionalF1 => (conf.q_tp + conf.q_nott_p, conf.q_tp + conf.q_t_notp),
    };
    let mut degenerate = false;
    let mut ratio = |num: u64, den: u64| {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(conf.q_tp, p_den);
    let recall = ratio(conf.q_tp, r_den);
    let pqa = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PqaScore {
        pqa,
        precision,
        recall,
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(q_tp: u64, q_t_notp: u64, q_nott_p: u64, q_nott_notp: u64) -> PqaConfusion {
        PqaConfusion {
            q_tp,
            q_t_notp,
            q_nott_p,
            q_nott_notp,
        }
    }

    #[test]
    fn perfect_questions() {
        for v in [PqaVariant::PaperVerbatim, PqaVariant::ConventionalF1] {
            let s = pqa(&cells(7, 0, 0, 0), v);
            assert_eq!((s.precision, s.recall, s.pqa), (1.0, 1.0, 1.0));
            assert!(!s.degenerate);
        }
    }

    #[test]
    fn zero_true_positives() {
        for v in [PqaVariant::PaperVerbatim, PqaVariant::ConventionalF1] {
            let s = pqa(&cells(0, 3, 2, 5), v);
            assert_eq!(s.pqa, 0.0);
            assert!(s.degenerate);
        }
    }

    #[test]
    fn verbatim_worked_example() {
        let s = pqa(&cells(3, 1, 0, 2), PqaVariant::PaperVerbatim);
        assert_eq!(s.precision, 0.75);
        assert_eq!(s.recall, 0.6);
        assert!((s.pqa - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn conventional_uses_false_positives() {
        // P = 3/(3+4), R = 3/(3+1)
        let s = pqa(&cells(3, 1, 4, 2), PqaVariant::ConventionalF1);
        assert_eq!(s.precision, 3.0 / 7.0);
        assert_eq!(s.recall, 0.75);
    }

    #[test]
    fn record_fills_cells() {
        use AnswerKind::*;
        let mut c = PqaConfusion::default();
        c.record(Question, Question);
        c.record(Question, Suggestion);
        c.record(Suggestion, Question);
        c.record(Suggestion, Suggestion);
        assert_eq!(c, cells(1, 1, 1, 1));
        assert_eq!(c.total(), 4);
    }
}
