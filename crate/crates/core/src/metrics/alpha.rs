use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingCriterion {
    Fluency,
    SemanticCorrectness,
    LevelAppropriateness,
}

impl RatingCriterion {
    pub const ALL: [RatingCriterion; 3] = [
        RatingCriterion::Fluency,
        RatingCriterion::SemanticCorrectness,
        RatingCriterion::LevelAppropriateness,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub annotator_id: String,
    pub sample_id: String,
    pub criterion: RatingCriterion,
    /// Ordinal 1..=5; `None` means the annotator could not judge.
    pub rating: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Alpha {
    Value(f64),
    Undefined,
}

impl Alpha {
    pub fn value(self) -> Option<f64> {
        match self {
            Alpha::Value(v) => Some(v),
            Alpha::Undefined => None,
        }
    }
}

/// Ordinal alpha from per-unit value lists. Units with fewer than two
/// values are not pairable and are ignored.
pub fn alpha_ordinal(units: &[Vec<u32>]) -> Alpha {
    let mut values: Vec<u32> = units.iter().filter(|u| u.len() >= 2).flatten().copied().collect();
    values.sort_unstable();
    values.dedup();
    if values.is_empty() {
        return Alpha::Undefined;
    }
    let idx: BTreeMap<u32, usize> = values.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let k = values.len();
    let mut o = vec![vec![0.0f64; k]; k];
    for u in units.iter().filter(|u| u.len() >= 2) {
        let m = u.len() as f64;
        for (i, a) in u.iter().enumerate() {
            for (j, b) in u.iter().enumerate() {
                if i != j {
                    o[idx[a]][idx[b]] += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let marg: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marg.iter().sum();
    // ordinal metric: (sum of marginals from c to k, minus half the endpoints)^2
    let delta = |c: usize, kk: usize| {
        let (lo, hi) = if c <= kk { (c, kk) } else { (kk, c) };
        let s: f64 = marg[lo..=hi].iter().sum::<f64>() - (marg[lo] + marg[hi]) / 2.0;
        s * s
    };
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..k {
        for kk in 0..k {
            let d = delta(c, kk);
            d_o += o[c][kk] * d;
            d_e += marg[c] * marg[kk] * d;
        }
    }
    if d_e == 0.0 {
        return Alpha::Value(1.0);
    }
    Alpha::Value(1.0 - (n - 1.0) * d_o / d_e)
}

/// Alpha for one criterion. Null ratings are dropped before pairing.
pub fn krippendorff_alpha(ratings: &[RatingRecord], criterion: RatingCriterion) -> Alpha {
    let mut units: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for r in ratings.iter().filter(|r| r.criterion == criterion) {
        if let Some(v) = r.rating {
            units.entry(r.sample_id.as_str()).or_default().push(u32::from(v));
        }
    }
    let units: Vec<Vec<u32>> = units.into_values().collect();
    alpha_ordinal(&units)
}
