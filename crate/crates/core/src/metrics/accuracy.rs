use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{normalize, tokens};

/// 1.0 when the normalized prediction equals any normalized reference.
pub fn exact_match(prediction: &str, references: &[String]) -> f64 {
    let p = normalize(prediction);
    if references.iter().any(|r| normalize(r) == p) {
        1.0
    } else {
        0.0
    }
}

/// `min(matching references / 3, 1)`.
pub fn consensus_accuracy(prediction: &str, references: &[String]) -> f64 {
    let p = normalize(prediction);
    let matches = references.iter().filter(|r| normalize(r) == p).count();
    (matches as f64 / 3.0).min(1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn prf_single(pred: &[String], reference: &[String]) -> Prf {
    if pred.is_empty() || reference.is_empty() {
        return Prf::default();
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / reference.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

/// Multiset token overlap against the reference giving the best F1.
pub fn token_prf(prediction: &str, references: &[String]) -> Prf {
    let pred = tokens(prediction);
    let mut best: Option<Prf> = None;
    for r in references {
        let s = prf_single(&pred, &tokens(r));
        if best.is_none_or(|b| s.f1 > b.f1) {
            best = Some(s);
        }
    }
    best.unwrap_or_default()
}
