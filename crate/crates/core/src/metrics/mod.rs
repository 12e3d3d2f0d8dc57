//! Answer-quality metrics and inter-annotator agreement.
//!
//! All text metrics tokenize on whitespace after [`normalize`]; there is no
//! word segmentation.

mod accuracy;
mod alpha;
mod bleu;
mod cider;
mod rouge;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub use accuracy::{consensus_accuracy, exact_match, token_prf, Prf};
pub use alpha::{alpha_ordinal, krippendorff_alpha, Alpha, RatingCriterion, RatingRecord};
pub use bleu::{bleu, BLEU_SMOOTHING};
pub use cider::{cider, CiderScores, CIDER_VARIANT};
pub use rouge::{lcs_len, rouge_l};

/// NFC, case-fold, whitespace collapse, punctuation stripped at token edges.
pub fn normalize(s: &str) -> String {
    tokens(s).join(" ")
}

pub fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| {
            let lower: String = w.nfc().flat_map(char::to_lowercase).collect::<String>().nfc().collect();
            lower
                .trim_matches(|c: char| c.is_ascii_punctuation() || unicode_punct(c))
                .to_string()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn unicode_punct(c: char) -> bool {
    matches!(
        c,
        '…' | '“' | '”' | '‘' | '’' | '«' | '»' | '–' | '—' | '¿' | '¡' | '、' | '。'
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub sample_id: String,
    pub prediction: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub sample_id: String,
    pub exact: f64,
    pub consensus: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub bleu: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    #[serde(rename = "Acc")]
    pub accuracy_exact: f64,
    #[serde(rename = "Acc_consensus")]
    pub accuracy_consensus: f64,
    #[serde(rename = "Prec")]
    pub precision: f64,
    #[serde(rename = "Rec")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "BLEU")]
    pub bleu: f64,
    #[serde(rename = "ROUGE")]
    pub rouge_l: f64,
    #[serde(rename = "CIDEr")]
    pub cider: f64,
    pub bleu_smoothing: String,
    pub cider_variant: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores every pair and averages each column.
pub fn evaluate(pairs: &[EvalPair]) -> (EvalReport, Vec<PairScores>) {
    let cider_scores = cider(pairs);
    let rows: Vec<PairScores> = pairs
        .iter()
        .zip(&cider_scores.scores)
        .map(|(p, c)| {
            let prf = token_prf(&p.prediction, &p.references);
            PairScores {
                sample_id: p.sample_id.clone(),
                exact: exact_match(&p.prediction, &p.references),
                consensus: consensus_accuracy(&p.prediction, &p.references),
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                bleu: bleu(&p.prediction, &p.references, 4),
                rouge_l: rouge_l(&p.prediction, &p.references),
                cider: *c,
            }
        })
        .collect();
    let report = EvalReport {
        pairs: rows.len(),
        accuracy_exact: mean(rows.iter().map(|r| r.exact)),
        accuracy_consensus: mean(rows.iter().map(|r| r.consensus)),
        precision: mean(rows.iter().map(|r| r.precision)),
        recall: mean(rows.iter().map(|r| r.recall)),
        f1: mean(rows.iter().map(|r| r.f1)),
        bleu: mean(rows.iter().map(|r| r.bleu)),
        rouge_l: mean(rows.iter().map(|r| r.rouge_l)),
        cider: cider_scores.mean,
        bleu_smoothing: BLEU_SMOOTHING.into(),
        cider_variant: CIDER_VARIANT.into(),
        warnings: cider_scores.warning.into_iter().collect(),
    };
    (report, rows)
}
