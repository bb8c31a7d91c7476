use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::bleu::clipped_overlap;

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// The reference was too short to contain a single unit of the metric.
    pub degenerate: bool,
}

impl PrfScore {
    fn from_counts(overlap: u64, hyp_units: u64, ref_units: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(overlap, hyp_units);
        let recall = ratio(overlap, ref_units);
        PrfScore {
            precision,
            recall,
            f1: f1(precision, recall),
            degenerate: ref_units == 0,
        }
    }
}

pub(crate) fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub rouge_1: PrfScore,
    pub rouge_2: PrfScore,
    pub rouge_l: PrfScore,
}

/// ROUGE-N over clipped n-gram overlap.
pub fn rouge_n<T: Eq + Hash>(hyp: &[T], reference: &[T], n: usize) -> PrfScore {
    let count = |len: usize| len.saturating_sub(n - 1) as u64;
    if n == 0 || reference.len() < n {
        return PrfScore {
            degenerate: true,
            ..Default::default()
        };
    }
    PrfScore::from_counts(
        clipped_overlap(hyp, reference, n),
        count(hyp.len()),
        count(reference.len()),
    )
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: recall = LCS/|ref|, precision = LCS/|hyp|.
pub fn rouge_l<T: Eq>(hyp: &[T], reference: &[T]) -> PrfScore {
    PrfScore::from_counts(
        lcs_len(hyp, reference) as u64,
        hyp.len() as u64,
        reference.len() as u64,
    )
}

pub fn rouge<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> RougeScore {
    RougeScore {
        rouge_1: rouge_n(hyp, reference, 1),
        rouge_2: rouge_n(hyp, reference, 2),
        rouge_l: rouge_l(hyp, reference),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical() {
        let r = rouge(&toks("a b c"), &toks("a b c"));
        for s in [r.rouge_1, r.rouge_2, r.rouge_l] {
            assert_eq!(s.f1, 1.0);
        }
    }

    #[test]
    fn lcs_example() {
        let s = rouge_l(&toks("a c d"), &toks("a b c d"));
        assert_eq!(s.recall, 0.75);
        assert_eq!(s.precision, 1.0);
        assert!((s.f1 - 2.0 * 0.75 / 1.75).abs() < 1e-15);
        assert!((s.f1 - 0.8571).abs() < 1e-4);
    }

    #[test]
    fn disjoint() {
        let r = rouge(&toks("c d"), &toks("a b"));
        for s in [r.rouge_1, r.rouge_2, r.rouge_l] {
            assert_eq!(s.f1, 0.0);
            assert_eq!(s.precision, 0.0);
            assert_eq!(s.recall, 0.0);
        }
    }

    #[test]
    fn short_reference_is_flagged() {
        let s = rouge_n(&toks("a b"), &toks("a"), 2);
        assert!(s.degenerate);
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn lcs_respects_order() {
        assert_eq!(lcs_len(&toks("d c b a"), &toks("a b c d")), 1);
    }
}
