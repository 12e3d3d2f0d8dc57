use super::tokens;

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn f_lcs(pred: &[String], reference: &[String]) -> f64 {
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(pred, reference) as f64;
    let p = lcs / pred.len() as f64;
    let r = lcs / reference.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// LCS F-measure, best over references.
pub fn rouge_l(prediction: &str, references: &[String]) -> f64 {
    let pred = tokens(prediction);
    references
        .iter()
        .map(|r| f_lcs(&pred, &tokens(r)))
        .fold(0.0, f64::max)
}
