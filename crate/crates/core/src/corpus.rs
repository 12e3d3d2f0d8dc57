//! Image/caption corpus ingestion and label canonicalization.
//!
//! Records are keyed by `image_id`. Texts from other sources are matched to
//! images by that id; texts whose id is unknown are dropped as orphans.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::jsonl::{self, JsonlError};
use crate::text::fold;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest contains no usable image entries")]
    EmptyCorpus,
    #[error("alias {alias:?} maps to both {first:?} and {second:?}")]
    AmbiguousAlias {
        alias: String,
        first: String,
        second: String,
    },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub uri: String,
    #[serde(default)]
    pub captions: Vec<String>,
    #[serde(default)]
    pub conversations: Vec<Conversation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_type: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub primary_objects: Vec<String>,
    /// Set when the image is known to contain readable text.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub has_text: bool,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, uri: impl Into<String>) -> Self {
        ImageRecord {
            image_id: image_id.into(),
            uri: uri.into(),
            captions: Vec::new(),
            conversations: Vec::new(),
            scene_type: None,
            primary_objects: Vec::new(),
            has_text: false,
        }
    }
}

/// One line of the image manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_type: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub primary_objects: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub has_text: bool,
}

impl ManifestEntry {
    pub fn new(image_id: &str, uri: &str) -> Self {
        ManifestEntry {
            image_id: image_id.to_string(),
            uri: uri.to_string(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextKind {
    Caption,
    Conversation,
}

/// One line of a text file: `payload` is a string for captions and a
/// `{question, answer}` object for conversations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEntry {
    pub image_id: String,
    pub kind: TextKind,
    pub payload: Value,
}

impl TextEntry {
    pub fn caption(image_id: &str, text: &str) -> Self {
        TextEntry {
            image_id: image_id.to_string(),
            kind: TextKind::Caption,
            payload: Value::String(text.to_string()),
        }
    }

    pub fn conversation(image_id: &str, question: &str, answer: &str) -> Self {
        TextEntry {
            image_id: image_id.to_string(),
            kind: TextKind::Conversation,
            payload: serde_json::json!({ "question": question, "answer": answer }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachReport {
    pub captions: usize,
    pub conversations: usize,
    pub orphans: usize,
    pub rejected: Vec<Rejection>,
}

/// Source tags recorded for a record, e.g. `image:coco` or `caption:vista`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStore {
    records: BTreeMap<String, ImageRecord>,
    provenance: BTreeMap<String, Provenance>,
}

const RECORDS_FILE: &str = "records.jsonl";
const PROVENANCE_FILE: &str = "provenance.json";

impl CorpusStore {
    /// Builds a store from a manifest, keeping the first entry per id.
    pub fn ingest_images(
        manifest: &[ManifestEntry],
        source: &str,
    ) -> Result<(CorpusStore, IngestReport), CorpusError> {
        if manifest.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut store = CorpusStore::default();
        let mut report = IngestReport::default();
        for (index, entry) in manifest.iter().enumerate() {
            let id = entry.image_id.trim();
            let uri = entry.uri.trim();
            if id.is_empty() || uri.is_empty() {
                report.rejected.push(Rejection {
                    index,
                    reason: "empty image_id or uri".into(),
                });
                continue;
            }
            if store.records.contains_key(id) {
                report.duplicates += 1;
                continue;
            }
            let mut record = ImageRecord::new(id, uri);
            record.scene_type = entry.scene_type.clone();
            record.primary_objects = entry.primary_objects.clone();
            record.has_text = entry.has_text;
            store.records.insert(id.to_string(), record);
            store
                .provenance
                .entry(id.to_string())
                .or_default()
                .tags
                .insert(format!("image:{source}"));
            report.accepted += 1;
        }
        if report.duplicates > 0 {
            log::warn!("{} duplicate image ids collapsed", report.duplicates);
        }
        if store.records.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        Ok((store, report))
    }

    /// Appends captions and conversations to matching records.
    pub fn attach_text(&mut self, texts: &[TextEntry], source: &str) -> AttachReport {
        let mut report = AttachReport::default();
        for (index, entry) in texts.iter().enumerate() {
            let Some(record) = self.records.get_mut(entry.image_id.trim()) else {
                report.orphans += 1;
                continue;
            };
            let tag = match (entry.kind, &entry.payload) {
                (TextKind::Caption, Value::String(text)) if !text.trim().is_empty() => {
                    record.captions.push(text.trim().to_string());
                    report.captions += 1;
                    "caption"
                }
                (TextKind::Conversation, Value::Object(map)) => {
                    let field = |k: &str| {
                        map.get(k)
                            .and_then(Value::as_str)
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                    };
                    match (field("question"), field("answer")) {
                        (Some(q), Some(a)) => {
                            record.conversations.push(Conversation {
                                question: q.to_string(),
                                answer: a.to_string(),
                            });
                            report.conversations += 1;
                            "conversation"
                        }
                        _ => {
                            report.rejected.push(Rejection {
                                index,
                                reason: "conversation needs question and answer".into(),
                            });
                            continue;
                        }
                    }
                }
                _ => {
                    report.rejected.push(Rejection {
                        index,
                        reason: "payload does not match kind".into(),
                    });
                    continue;
                }
            };
            self.provenance
                .entry(record.image_id.clone())
                .or_default()
                .tags
                .insert(format!("{tag}:{source}"));
        }
        if report.orphans > 0 {
            log::warn!("{} texts reference unknown image ids", report.orphans);
        }
        report
    }

    /// Rewrites scene types and object labels to their canonical forms.
    pub fn canonicalize_labels(&mut self, canon: &mut Canonicalizer) {
        for record in self.records.values_mut() {
            if let Some(scene) = record.scene_type.take() {
                record.scene_type = Some(canon.canonicalize(&scene));
            }
            for obj in &mut record.primary_objects {
                *obj = canon.canonicalize(obj);
            }
        }
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records.get(image_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.values()
    }

    pub fn provenance(&self, image_id: &str) -> Option<&Provenance> {
        self.provenance.get(image_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir)?;
        let records: Vec<&ImageRecord> = self.records.values().collect();
        jsonl::write(&dir.join(RECORDS_FILE), &records)?;
        fs::write(
            dir.join(PROVENANCE_FILE),
            serde_json::to_string_pretty(&self.provenance)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<CorpusStore, CorpusError> {
        let list: Vec<ImageRecord> = jsonl::read(&dir.join(RECORDS_FILE))?;
        let provenance = match fs::read_to_string(dir.join(PROVENANCE_FILE)) {
            Ok(raw) => serde_json::from_str(&raw)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        let records = list
            .into_iter()
            .map(|r| (r.image_id.clone(), r))
            .collect();
        Ok(CorpusStore {
            records,
            provenance,
        })
    }
}

/// Alias lookup built from a `canonical -> [aliases]` dictionary.
#[derive(Debug, Clone, Default)]
pub struct Canonicalizer {
    aliases: BTreeMap<String, String>,
    candidates: BTreeSet<String>,
}

impl Canonicalizer {
    pub fn new(dictionary: &BTreeMap<String, Vec<String>>) -> Result<Self, CorpusError> {
        let mut aliases: BTreeMap<String, String> = BTreeMap::new();
        for (canonical, list) in dictionary {
            for alias in list.iter().chain(std::iter::once(canonical)) {
                let key = fold(alias);
                match aliases.get(&key) {
                    Some(existing) if existing != canonical => {
                        return Err(CorpusError::AmbiguousAlias {
                            alias: alias.clone(),
                            first: existing.clone(),
                            second: canonical.clone(),
                        })
                    }
                    _ => {
                        aliases.insert(key, canonical.clone());
                    }
                }
            }
        }
        Ok(Canonicalizer {
            aliases,
            candidates: BTreeSet::new(),
        })
    }

    pub fn from_json(raw: &str) -> Result<Self, CorpusError> {
        Canonicalizer::new(&serde_json::from_str(raw)?)
    }

    /// Canonical form of `label`; unknown labels pass through normalized and
    /// are registered as new candidate canonical labels.
    pub fn canonicalize(&mut self, label: &str) -> String {
        let key = fold(label);
        if let Some(canonical) = self.aliases.get(&key) {
            return canonical.clone();
        }
        self.aliases.insert(key.clone(), key.clone());
        self.candidates.insert(key.clone());
        key
    }

    pub fn candidates(&self) -> &BTreeSet<String> {
        &self.candidates
    }

    pub fn is_canonical(&self, label: &str) -> bool {
        self.aliases.values().any(|c| c == label)
    }
}
