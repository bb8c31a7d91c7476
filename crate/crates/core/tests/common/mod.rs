//! Independent reference implementations and generators shared by the
//! integration and acceptance tests. The oracles use plain loops and linear
//! scans on purpose so they share no code path with the library.

#![allow(dead_code)]

use coq_forge::corpus::{Conversation, Speaker};
use rand::Rng;

pub const ORDERS: usize = 4;

/// Occurrences of `gram` in `tokens`, counted by index scan.
fn occurrences(tokens: &[u8], gram: &[u8]) -> u64 {
    let n = gram.len();
    if tokens.len() < n {
        return 0;
    }
    let mut count = 0;
    for start in 0..=tokens.len() - n {
        let mut same = true;
        for k in 0..n {
            if tokens[start + k] != gram[k] {
                same = false;
                break;
            }
        }
        if same {
            count += 1;
        }
    }
    count
}

/// Clipped n-gram matches: for each distinct hypothesis n-gram,
/// min(count in hyp, count in ref).
pub fn clipped(hyp: &[u8], reference: &[u8], n: usize) -> u64 {
    if hyp.len() < n {
        return 0;
    }
    let mut seen: Vec<&[u8]> = Vec::new();
    let mut total = 0;
    for start in 0..=hyp.len() - n {
        let gram = &hyp[start..start + n];
        if seen.contains(&gram) {
            continue;
        }
        seen.push(gram);
        total += occurrences(hyp, gram).min(occurrences(reference, gram));
    }
    total
}

fn grams(len: usize, n: usize) -> u64 {
    if len >= n {
        (len - n + 1) as u64
    } else {
        0
    }
}

/// Cumulative BLEU-1..4 straight from the definition.
pub fn bleu(hyp: &[u8], reference: &[u8]) -> [f64; ORDERS] {
    let mut out = [0.0; ORDERS];
    if hyp.is_empty() {
        return out;
    }
    let bp = if hyp.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
    };
    let mut product = 1.0;
    for n in 1..=ORDERS {
        let total = grams(hyp.len(), n);
        let p = if total == 0 {
            0.0
        } else {
            clipped(hyp, reference, n) as f64 / total as f64
        };
        product *= p;
        out[n - 1] = if product > 0.0 {
            bp * product.powf(1.0 / n as f64)
        } else {
            0.0
        };
    }
    out
}

/// (precision, recall, f1)
pub type Prf = (f64, f64, f64);

fn prf(overlap: u64, hyp_units: u64, ref_units: u64) -> Prf {
    let p = if hyp_units == 0 { 0.0 } else { overlap as f64 / hyp_units as f64 };
    let r = if ref_units == 0 { 0.0 } else { overlap as f64 / ref_units as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn rouge_n(hyp: &[u8], reference: &[u8], n: usize) -> Prf {
    if reference.len() < n {
        return (0.0, 0.0, 0.0);
    }
    prf(clipped(hyp, reference, n), grams(hyp.len(), n), grams(reference.len(), n))
}

/// LCS by memoized recursion over suffixes.
pub fn lcs(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
    go(a, b, 0, 0, &mut memo)
}

pub fn rouge_l(hyp: &[u8], reference: &[u8]) -> Prf {
    prf(lcs(hyp, reference) as u64, hyp.len() as u64, reference.len() as u64)
}

/// PQA from the four confusion cells, written out directly.
/// Returns (precision, recall, pqa).
pub fn pqa_verbatim(q_tp: u64, q_t_notp: u64, q_nott_notp: u64) -> (f64, f64, f64) {
    let p = if q_tp + q_t_notp == 0 { 0.0 } else { q_tp as f64 / (q_tp + q_t_notp) as f64 };
    let r = if q_tp + q_nott_notp == 0 {
        0.0
    } else {
        q_tp as f64 / (q_tp + q_nott_notp) as f64
    };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn pqa_conventional(q_tp: u64, q_t_notp: u64, q_nott_p: u64) -> (f64, f64, f64) {
    let p = if q_tp + q_nott_p == 0 { 0.0 } else { q_tp as f64 / (q_tp + q_nott_p) as f64 };
    let r = if q_tp + q_t_notp == 0 { 0.0 } else { q_tp as f64 / (q_tp + q_t_notp) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn random_tokens(rng: &mut impl Rng, max_len: usize, alphabet: u8) -> Vec<u8> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| rng.random_range(0..alphabet)).collect()
}

const TEXT_POOL: &[&str] = &[
    "咳嗽", "发烧", "三天", "医生", "病人", "：", "？", "。", "吗", "a", "b", " ", "头疼",
    "建议", "多喝水", "x", "1", "2", "病人：", "医生：",
];

/// Random utterance text. Fragments include the role prefixes themselves.
pub fn random_text(rng: &mut impl Rng, max_parts: usize) -> String {
    let parts = rng.random_range(1..=max_parts);
    let mut s = String::new();
    for _ in 0..parts {
        s.push_str(TEXT_POOL[rng.random_range(0..TEXT_POOL.len())]);
    }
    if s.trim().is_empty() {
        s.push('x');
    }
    s
}

/// Random alternating conversation with `2..=2 * max_pairs` utterances.
pub fn random_conversation(rng: &mut impl Rng, id: usize, max_pairs: usize, max_parts: usize) -> Conversation {
    let n = rng.random_range(2..=2 * max_pairs);
    let turns: Vec<(Speaker, String)> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { Speaker::Patient } else { Speaker::Doctor };
            (s, random_text(rng, max_parts))
        })
        .collect();
    Conversation::assemble(format!("c{id}"), "fuzz", turns, Default::default())
        .expect("alternating turns with non-empty text")
}
