use std::collections::{HashMap, HashSet};

use super::{tokens, EvalPair};

pub const CIDER_VARIANT: &str = "CIDEr-D (n=1..4, sigma=6, clipped tf-idf, x10)";

const MAX_N: usize = 4;
const SIGMA: f64 = 6.0;

type Counts = HashMap<Vec<String>, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct CiderScores {
    pub scores: Vec<f64>,
    pub mean: f64,
    pub warning: Option<String>,
}

fn counts(toks: &[String]) -> [Counts; MAX_N] {
    std::array::from_fn(|i| {
        let n = i + 1;
        let mut c = Counts::new();
        if toks.len() >= n {
            for w in toks.windows(n) {
                *c.entry(w.to_vec()).or_default() += 1.0;
            }
        }
        c
    })
}

struct Vector {
    weights: [HashMap<Vec<String>, f64>; MAX_N],
    norms: [f64; MAX_N],
    length: f64,
}

fn to_vector(c: &[Counts; MAX_N], df: &HashMap<Vec<String>, f64>, log_n: f64) -> Vector {
    let mut norms = [0.0; MAX_N];
    let weights = std::array::from_fn(|n| {
        c[n].iter()
            .map(|(g, tf)| {
                let d = df.get(g).copied().unwrap_or(0.0).max(1.0).ln();
                let w = tf * (log_n - d);
                norms[n] += w * w;
                (g.clone(), w)
            })
            .collect()
    });
    Vector {
        weights,
        norms: norms.map(f64::sqrt),
        length: c[0].values().sum(),
    }
}

fn similarity(hyp: &Vector, reference: &Vector) -> [f64; MAX_N] {
    let delta = hyp.length - reference.length;
    let penalty = (-(delta * delta) / (2.0 * SIGMA * SIGMA)).exp();
    std::array::from_fn(|n| {
        let mut dot = 0.0;
        for (g, w) in &hyp.weights[n] {
            if let Some(r) = reference.weights[n].get(g) {
                dot += w.min(*r) * r;
            }
        }
        if hyp.norms[n] != 0.0 && reference.norms[n] != 0.0 {
            dot /= hyp.norms[n] * reference.norms[n];
        }
        dot * penalty
    })
}

/// CIDEr-D over a batch; document frequencies come from the batch's
/// references, one document per pair.
pub fn cider(pairs: &[EvalPair]) -> CiderScores {
    let refs: Vec<Vec<[Counts; MAX_N]>> = pairs
        .iter()
        .map(|p| p.references.iter().map(|r| counts(&tokens(r))).collect())
        .collect();
    let mut df: HashMap<Vec<String>, f64> = HashMap::new();
    for pair_refs in &refs {
        let mut seen: HashSet<&Vec<String>> = HashSet::new();
        for rc in pair_refs {
            for order in rc {
                seen.extend(order.keys());
            }
        }
        for g in seen {
            *df.entry(g.clone()).or_default() += 1.0;
        }
    }
    let warning = (pairs.len() == 1).then(|| {
        log::warn!("cider: batch of one pair, every idf is zero");
        "CIDEr undefined on a single pair; scored 0".to_string()
    });
    let log_n = (pairs.len().max(1) as f64).ln();

    let scores: Vec<f64> = pairs
        .iter()
        .zip(&refs)
        .map(|(p, pair_refs)| {
            if pair_refs.is_empty() {
                return 0.0;
            }
            let hyp = to_vector(&counts(&tokens(&p.prediction)), &df, log_n);
            let mut total = [0.0; MAX_N];
            for rc in pair_refs {
                let rv = to_vector(rc, &df, log_n);
                for (t, s) in total.iter_mut().zip(similarity(&hyp, &rv)) {
                    *t += s;
                }
            }
            let mean_over_n = total.iter().sum::<f64>() / MAX_N as f64;
            mean_over_n / pair_refs.len() as f64 * 10.0
        })
        .collect();
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    CiderScores { scores, mean, warning }
}
