use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::ScoredSample;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("{groups} image groups cannot fill {splits} splits")]
    TooFewGroups { groups: usize, splits: usize },
    #[error("split ratios must be 2 or 3 positive values summing to 1")]
    InvalidRatios,
}

pub fn split_names(count: usize) -> &'static [&'static str] {
    match count {
        2 => &["train", "val"],
        _ => &["train", "val", "test"],
    }
}

/// Largest-remainder allocation of `total` units over `ratios`.
pub(crate) fn allocate(total: usize, ratios: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut sizes: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut rest = total - sizes.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..ratios.len()).collect();
    by_remainder.sort_by(|a, b| {
        let ra = ideal[*a] - ideal[*a].floor();
        let rb = ideal[*b] - ideal[*b].floor();
        rb.total_cmp(&ra).then(a.cmp(b))
    });
    for i in by_remainder {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    sizes
}

/// Assigns whole image groups to splits. Image ids are sorted, shuffled
/// with `seed`, then cut at the allocated group counts.
pub fn split(
    items: Vec<ScoredSample>,
    ratios: &[f64],
    seed: u64,
) -> Result<Vec<(String, Vec<ScoredSample>)>, SplitError> {
    let sum: f64 = ratios.iter().sum();
    if !matches!(ratios.len(), 2 | 3) || ratios.iter().any(|r| *r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SplitError::InvalidRatios);
    }
    let images: BTreeSet<&str> = items.iter().map(|it| it.sample.image_id.as_str()).collect();
    if images.len() < ratios.len() {
        return Err(SplitError::TooFewGroups {
            groups: images.len(),
            splits: ratios.len(),
        });
    }
    let mut order: Vec<String> = images.into_iter().map(str::to_string).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let sizes = allocate(order.len(), ratios);
    let mut assignment: BTreeMap<String, usize> = BTreeMap::new();
    let mut cursor = 0;
    for (split_idx, size) in sizes.iter().enumerate() {
        for id in &order[cursor..cursor + size] {
            assignment.insert(id.clone(), split_idx);
        }
        cursor += size;
    }

    let names = split_names(ratios.len());
    let mut out: Vec<(String, Vec<ScoredSample>)> =
        names.iter().map(|n| (n.to_string(), Vec::new())).collect();
    for it in items {
        let idx = assignment[&it.sample.image_id];
        out[idx].1.push(it);
    }
    for (_, v) in &mut out {
        v.sort_by(|a, b| a.sample.sample_id.cmp(&b.sample.sample_id));
    }
    Ok(out)
}
