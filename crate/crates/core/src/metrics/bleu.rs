//! BLEU with clipped n-gram precision and brevity penalty.
//!
//! `BleuStats` holds the sufficient statistics (clipped matches, candidate
//! n-gram totals, lengths). Sentence BLEU scores one pair; corpus BLEU merges
//! the statistics of all pairs before scoring.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuMode {
    /// BLEU-n is the geometric mean of precisions 1..=n times BP.
    #[default]
    Cumulative,
    /// BLEU-n is BP times the order-n precision alone.
    Individual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuOptions {
    pub max_order: usize,
    pub mode: BleuMode,
    /// Add-one smoothing on orders >= 2.
    pub smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        BleuOptions {
            max_order: MAX_ORDER,
            mode: BleuMode::Cumulative,
            smoothing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// `bleu[n - 1]` is BLEU-n; orders above `max_order` stay 0.
    pub bleu: [f64; MAX_ORDER],
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    /// Set when the hypothesis is empty; every score is then 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

pub(crate) fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], u32> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Size of the multiset intersection of the n-grams of `a` and `b`.
pub(crate) fn clipped_overlap<T: Eq + Hash>(a: &[T], b: &[T], n: usize) -> u64 {
    let ca = ngram_counts(a, n);
    let cb = ngram_counts(b, n);
    ca.iter()
        .map(|(gram, &count)| count.min(cb.get(gram).copied().unwrap_or(0)) as u64)
        .sum()
}

impl BleuStats {
    pub fn from_pair<T: Eq + Hash>(hyp: &[T], reference: &[T], max_order: usize) -> Self {
        let max_order = max_order.clamp(1, MAX_ORDER);
        let mut stats = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=max_order {
            stats.matches[n - 1] = clipped_overlap(hyp, reference, n);
            stats.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        }
        stats
    }

    pub fn merge(&mut self, other: &BleuStats) {
        for k in 0..MAX_ORDER {
            self.matches[k] += other.matches[k];
            self.totals[k] += other.totals[k];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn score(&self, opts: &BleuOptions) -> BleuScore {
        let max_order = opts.max_order.clamp(1, MAX_ORDER);
        let mut out = BleuScore {
            bleu: [0.0; MAX_ORDER],
            precisions: [0.0; MAX_ORDER],
            brevity_penalty: 0.0,
            degenerate: self.hyp_len == 0,
        };
        if out.degenerate {
            return out;
        }
        out.brevity_penalty = if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        for k in 0..max_order {
            let (m, t) = (self.matches[k], self.totals[k]);
            out.precisions[k] = if opts.smoothing && k > 0 {
                (m + 1) as f64 / (t + 1) as f64
            } else if t == 0 {
                0.0
            } else {
                m as f64 / t as f64
            };
        }
        let mut log_sum = 0.0;
        let mut all_positive = true;
        for n in 1..=max_order {
            let p = out.precisions[n - 1];
            all_positive &= p > 0.0;
            log_sum += if p > 0.0 { p.ln() } else { 0.0 };
            out.bleu[n - 1] = match opts.mode {
                BleuMode::Cumulative if all_positive => {
                    out.brevity_penalty * (log_sum / n as f64).exp()
                }
                BleuMode::Cumulative => 0.0,
                BleuMode::Individual => out.brevity_penalty * p,
            };
        }
        out
    }
}

/// Sentence-level BLEU of one hypothesis against one reference.
pub fn bleu<T: Eq + Hash>(hyp: &[T], reference: &[T], opts: &BleuOptions) -> BleuScore {
    BleuStats::from_pair(hyp, reference, opts.max_order).score(opts)
}

/// Corpus-level BLEU: clipped counts and lengths are summed over all pairs
/// before the precisions are formed.
pub fn corpus_bleu<'a, T, I>(pairs: I, opts: &BleuOptions) -> BleuScore
where
    T: Eq + Hash + 'a,
    I: IntoIterator<Item = (&'a [T], &'a [T])>,
{
    let mut stats = BleuStats::default();
    for (hyp, reference) in pairs {
        stats.merge(&BleuStats::from_pair(hyp, reference, opts.max_order));
    }
    stats.score(opts)
}
