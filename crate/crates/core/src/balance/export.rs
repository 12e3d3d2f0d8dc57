use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BalanceError, ScoredSample};
use crate::generation::SampleStatus;
use crate::jsonl;
use crate::scheduler::{Category, Level};

/// One exported line. Field order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub sample_id: String,
    pub image_id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub category: Category,
    pub level: Level,
    pub pass_count: usize,
    pub grounding_score: Option<f64>,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub total: usize,
    pub splits: BTreeMap<String, usize>,
    pub categories: BTreeMap<Category, usize>,
    pub levels: BTreeMap<String, usize>,
    pub config_hash: String,
    pub seed: u64,
}

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `{split}.jsonl` per split and `manifest.json` into `dir`, and
/// marks the samples exported.
pub fn export(
    splits: &mut [(String, Vec<ScoredSample>)],
    dir: &Path,
    config_hash: &str,
    seed: u64,
) -> Result<ExportManifest, BalanceError> {
    fs::create_dir_all(dir)?;
    let mut manifest = ExportManifest {
        total: 0,
        splits: BTreeMap::new(),
        categories: BTreeMap::new(),
        levels: BTreeMap::new(),
        config_hash: config_hash.to_string(),
        seed,
    };
    for (name, items) in splits.iter_mut() {
        let records: Vec<ExportRecord> = items
            .iter()
            .map(|it| ExportRecord {
                sample_id: it.sample.sample_id.clone(),
                image_id: it.sample.image_id.clone(),
                question: it.sample.question.clone(),
                answers: it.sample.answers.clone(),
                category: it.sample.category,
                level: it.sample.level,
                pass_count: it.pass_count,
                grounding_score: it.grounding_score,
                split: name.clone(),
            })
            .collect();
        jsonl::write(&dir.join(format!("{name}.jsonl")), &records)?;
        for it in items.iter_mut() {
            it.sample.advance(SampleStatus::Exported);
            *manifest.categories.entry(it.sample.category).or_default() += 1;
            *manifest.levels.entry(it.sample.level.to_string()).or_default() += 1;
        }
        manifest.splits.insert(name.clone(), records.len());
        manifest.total += records.len();
    }
    let body = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), body + "\n")?;
    Ok(manifest)
}
