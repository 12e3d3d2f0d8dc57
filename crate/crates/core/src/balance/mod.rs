//! Category balancing of retained samples, then image-grouped splits and
//! export.

mod export;
mod split;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{config_hash, export, ExportManifest, ExportRecord};
pub use split::{split, split_names, SplitError};

use crate::generation::{QaSample, SampleStatus};
use crate::scheduler::{Category, CategoryTable};

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("invalid balance config: {0}")]
    Config(String),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("export failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("export failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("export failed: {0}")]
    Jsonl(#[from] crate::jsonl::JsonlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub min_support: f64,
    pub max_spread: f64,
    pub weight_grounding: f64,
    pub weight_depth: f64,
    pub split_ratios: Vec<f64>,
    /// Low-support category -> category its samples are folded into.
    pub parents: BTreeMap<Category, Category>,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            min_support: 0.01,
            max_spread: 0.10,
            weight_grounding: 0.5,
            weight_depth: 0.5,
            split_ratios: vec![0.8, 0.1, 0.1],
            parents: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<(), BalanceError> {
        let bad = |m: String| Err(BalanceError::Config(m));
        if !(0.0..1.0).contains(&self.max_spread) {
            return bad(format!("max_spread {} not in [0, 1)", self.max_spread));
        }
        if !(0.0..=1.0).contains(&self.min_support) {
            return bad(format!("min_support {} not in [0, 1]", self.min_support));
        }
        if self.weight_grounding < 0.0 || self.weight_depth < 0.0 {
            return bad("weights must be non-negative".into());
        }
        if self.weight_grounding + self.weight_depth <= 0.0 {
            return bad("weights must not both be zero".into());
        }
        if !matches!(self.split_ratios.len(), 2 | 3) || self.split_ratios.iter().any(|r| *r <= 0.0) {
            return bad("split_ratios must be 2 or 3 positive values".into());
        }
        let sum: f64 = self.split_ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("split_ratios sum to {sum}"));
        }
        Ok(())
    }
}

/// A retained sample with its verdict summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample: QaSample,
    pub pass_count: usize,
    pub grounding_score: Option<f64>,
}

pub fn sample_weight(grounding: Option<f64>, level: crate::scheduler::Level, config: &BalanceConfig) -> f64 {
    let g = grounding.unwrap_or(0.0);
    config.weight_grounding * g + config.weight_depth * f64::from(level.get() - 1) / 4.0
}

pub fn category_counts(items: &[ScoredSample]) -> BTreeMap<Category, usize> {
    let mut counts = BTreeMap::new();
    for it in items {
        *counts.entry(it.sample.category).or_default() += 1;
    }
    counts
}

/// `(max - min) / max` over non-empty categories.
pub fn spread(counts: &BTreeMap<Category, usize>) -> f64 {
    let max = counts.values().copied().max().unwrap_or(0);
    let min = counts.values().copied().min().unwrap_or(0);
    if max == 0 {
        0.0
    } else {
        (max - min) as f64 / max as f64
    }
}

fn balance_out(mut it: ScoredSample, reason: &str) -> ScoredSample {
    if it.sample.advance(SampleStatus::BalancedOut) {
        it.sample.rejection_reason = Some(reason.into());
    }
    it
}

/// Folds categories below `min_support` into their declared parent, or
/// removes them. A sample whose level is outside the parent's range is
/// removed instead of relabelled.
pub fn merge_low_support(
    items: Vec<ScoredSample>,
    config: &BalanceConfig,
    table: &CategoryTable,
) -> (Vec<ScoredSample>, Vec<ScoredSample>) {
    let mut kept = items;
    let mut removed = Vec::new();
    loop {
        let total = kept.len();
        if total == 0 {
            break;
        }
        let counts = category_counts(&kept);
        let low: Vec<Category> = counts
            .iter()
            .filter(|(_, n)| (**n as f64 / total as f64) < config.min_support)
            .map(|(c, _)| *c)
            .collect();
        if low.is_empty() {
            break;
        }
        let mut next = Vec::with_capacity(total);
        for mut it in kept {
            let c = it.sample.category;
            if !low.contains(&c) {
                next.push(it);
                continue;
            }
            match config.parents.get(&c) {
                Some(&parent) if parent != c && table.admits(parent, it.sample.level) => {
                    it.sample.category = parent;
                    next.push(it);
                }
                _ => removed.push(balance_out(it, "balance:low_support")),
            }
        }
        kept = next;
    }
    (kept, removed)
}

/// Largest per-category cap `c >= m` with `(c - m) / c <= s`.
pub fn category_cap(min_count: usize, max_spread: f64) -> usize {
    let mut cap = (min_count as f64 / (1.0 - max_spread)).floor() as usize;
    cap = cap.max(min_count);
    while cap > min_count && (cap - min_count) as f64 / cap as f64 > max_spread {
        cap -= 1;
    }
    cap
}

/// Caps every category at `category_cap(min)`, dropping the lowest-weight
/// samples first; equal weights are ordered by a seeded shuffle.
pub fn undersample(items: Vec<ScoredSample>, config: &BalanceConfig) -> (Vec<ScoredSample>, Vec<ScoredSample>) {
    let counts = category_counts(&items);
    if counts.len() < 2 {
        log::warn!("undersample: {} categories present, nothing to balance", counts.len());
        return (items, Vec::new());
    }
    let min = *counts.values().min().unwrap();
    let cap = category_cap(min, config.max_spread);

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|a, b| items[*a].sample.sample_id.cmp(&items[*b].sample.sample_id));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let weights: Vec<f64> = items
        .iter()
        .map(|it| {
            if it.grounding_score.is_none() {
                log::warn!("{}: no grounding score, weighting as 0", it.sample.sample_id);
            }
            sample_weight(it.grounding_score, it.sample.level, config)
        })
        .collect();
    order.sort_by(|a, b| weights[*b].total_cmp(&weights[*a]));

    let mut keep = vec![false; items.len()];
    let mut taken: BTreeMap<Category, usize> = BTreeMap::new();
    for i in order {
        let n = taken.entry(items[i].sample.category).or_default();
        if *n < cap {
            *n += 1;
            keep[i] = true;
        }
    }
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (it, k) in items.into_iter().zip(keep) {
        if k {
            kept.push(it);
        } else {
            removed.push(balance_out(it, "balance:undersampled"));
        }
    }
    (kept, removed)
}

/// Merge then undersample.
pub fn balance(
    items: Vec<ScoredSample>,
    config: &BalanceConfig,
    table: &CategoryTable,
) -> Result<(Vec<ScoredSample>, Vec<ScoredSample>), BalanceError> {
    config.validate()?;
    let (merged, mut removed) = merge_low_support(items, config, table);
    let (kept, dropped) = undersample(merged, config);
    removed.extend(dropped);
    Ok((kept, removed))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::scheduler::Level;
    use proptest::prelude::*;

    pub(crate) fn item(id: usize, image: usize, category: Category, level: u8, g: f64) -> ScoredSample {
        ScoredSample {
            sample: QaSample {
                sample_id: format!("q{id:06}"),
                image_id: format!("img{image}"),
                question: format!("Câu hỏi {id}?"),
                answers: vec!["một".into(); 5],
                category,
                level: Level::new(level).unwrap(),
                status: SampleStatus::Retained,
                rejection_reason: None,
            },
            pass_count: 12,
            grounding_score: Some(g),
        }
    }

    fn batch(counts: &[(Category, usize)]) -> Vec<ScoredSample> {
        let mut out = Vec::new();
        for (c, n) in counts {
            for _ in 0..*n {
                let id = out.len();
                let level = CategoryTable::default().range(*c).min.get();
                out.push(item(id, id, *c, level, (id % 7) as f64 / 7.0));
            }
        }
        out
    }

    #[test]
    fn weight_examples() {
        let cfg = BalanceConfig::default();
        assert_eq!(sample_weight(Some(1.0), Level::new(5).unwrap(), &cfg), 1.0);
        assert_eq!(sample_weight(Some(0.0), Level::new(1).unwrap(), &cfg), 0.0);
        assert!((sample_weight(Some(0.6), Level::new(3).unwrap(), &cfg) - 0.55).abs() < 1e-12);
        assert_eq!(sample_weight(None, Level::new(1).unwrap(), &cfg), 0.0);
    }

    #[test]
    fn cap_examples() {
        assert_eq!(category_cap(100, 0.10), 111);
        assert!(category_cap(100, 0.10) <= 112);
        assert_eq!(category_cap(0, 0.10), 0);
        assert_eq!(category_cap(9, 0.10), 10);
    }

    #[test]
    fn undersample_two_categories() {
        let cfg = BalanceConfig::default();
        let (kept, removed) = undersample(
            batch(&[(Category::Counting, 200), (Category::YesNo, 100)]),
            &cfg,
        );
        let counts = category_counts(&kept);
        assert!(counts[&Category::Counting] <= 112);
        assert!(spread(&counts) <= 0.10);
        assert_eq!(kept.len() + removed.len(), 300);
        assert!(removed.iter().all(|r| r.sample.status == SampleStatus::BalancedOut));
    }

    #[test]
    fn undersample_keeps_highest_weights() {
        let mut items = batch(&[(Category::Counting, 20), (Category::YesNo, 10)]);
        for (i, it) in items.iter_mut().enumerate().take(20) {
            it.grounding_score = Some(i as f64 / 20.0);
        }
        let (kept, _) = undersample(items, &BalanceConfig::default());
        let mut kept_counting: Vec<f64> = kept
            .iter()
            .filter(|k| k.sample.category == Category::Counting)
            .map(|k| k.grounding_score.unwrap())
            .collect();
        kept_counting.sort_by(f64::total_cmp);
        assert_eq!(kept_counting.len(), 11);
        assert_eq!(kept_counting[0], 9.0 / 20.0);
    }

    #[test]
    fn near_balanced_is_untouched() {
        let items = batch(&[(Category::Counting, 105), (Category::YesNo, 100)]);
        let (kept, removed) = undersample(items, &BalanceConfig::default());
        assert_eq!(kept.len(), 205);
        assert!(removed.is_empty());
    }

    #[test]
    fn single_category_is_noop() {
        let (kept, removed) = undersample(batch(&[(Category::YesNo, 100)]), &BalanceConfig::default());
        assert_eq!(kept.len(), 100);
        assert!(removed.is_empty());
    }

    #[test]
    fn low_support_without_parent_is_removed() {
        let items = batch(&[(Category::YesNo, 997), (Category::Counting, 3)]);
        let (kept, removed) = merge_low_support(items, &BalanceConfig::default(), &CategoryTable::default());
        assert_eq!(kept.len(), 997);
        assert_eq!(removed.len(), 3);
    }

    #[test]
    fn five_percent_is_untouched() {
        let items = batch(&[(Category::YesNo, 950), (Category::Counting, 50)]);
        let (kept, removed) = merge_low_support(items, &BalanceConfig::default(), &CategoryTable::default());
        assert_eq!(kept.len(), 1000);
        assert!(removed.is_empty());
    }

    #[test]
    fn low_support_with_parent_conserves_count() {
        let items = batch(&[(Category::Relationship, 995), (Category::Comparison, 5)]);
        let cfg = BalanceConfig {
            parents: BTreeMap::from([(Category::Comparison, Category::Relationship)]),
            ..Default::default()
        };
        let (kept, removed) = merge_low_support(items, &cfg, &CategoryTable::default());
        assert!(removed.is_empty());
        assert_eq!(category_counts(&kept)[&Category::Relationship], 1000);
    }

    #[test]
    fn parent_out_of_range_removes_sample() {
        // object/attribute samples are level 1; causal reasoning admits 4-5 only
        let items = batch(&[(Category::Causal, 995), (Category::ObjectAttribute, 5)]);
        let cfg = BalanceConfig {
            parents: BTreeMap::from([(Category::ObjectAttribute, Category::Causal)]),
            ..Default::default()
        };
        let (kept, removed) = merge_low_support(items, &cfg, &CategoryTable::default());
        assert_eq!(kept.len(), 995);
        assert_eq!(removed.len(), 5);
    }

    #[test]
    fn config_validation() {
        assert!(BalanceConfig::default().validate().is_ok());
        let bad = BalanceConfig {
            split_ratios: vec![0.8, 0.3],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = BalanceConfig {
            weight_grounding: 0.0,
            weight_depth: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn undersample_bounds_spread(counts in prop::collection::vec(1usize..400, 2..9), seed in any::<u64>()) {
            let spec: Vec<(Category, usize)> = Category::ALL.iter().copied().zip(counts.iter().copied()).collect();
            let items = batch(&spec);
            let before = category_counts(&items);
            let cfg = BalanceConfig { seed, ..Default::default() };
            let (kept, _) = undersample(items.clone(), &cfg);
            let after = category_counts(&kept);
            prop_assert!(spread(&after) <= 0.10 + 1e-12);
            for (c, n) in &after {
                prop_assert!(*n <= before[c]);
            }
            let (again, _) = undersample(items, &cfg);
            prop_assert_eq!(kept, again);
        }
    }
}
