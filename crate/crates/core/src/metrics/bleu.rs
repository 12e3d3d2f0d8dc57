use std::collections::HashMap;

use super::tokens;

pub const BLEU_SMOOTHING: &str = "add-one on zero n-gram precisions";

fn ngram_counts(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

/// Sentence BLEU with uniform weights over 1..=max_n, brevity penalty
/// against the closest reference length (shorter wins ties).
pub fn bleu(prediction: &str, references: &[String], max_n: usize) -> f64 {
    let pred = tokens(prediction);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokens(r)).collect();
    if pred.is_empty() || refs.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let pred_counts = ngram_counts(&pred, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_default();
                *e = (*e).max(c);
            }
        }
        let matched: usize = pred_counts
            .iter()
            .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = pred.len().saturating_sub(n - 1);
        let p = if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let c = pred.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|len| (len.abs_diff(c), *len))
        .unwrap();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * (log_sum / max_n as f64).exp()
}
