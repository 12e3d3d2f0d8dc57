//! Human review store: a seeded subset of exported samples and the ratings
//! submitted against it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vqa_core::balance::ExportRecord;
use vqa_core::corpus::CorpusStore;
use vqa_core::jsonl::{self, JsonlError};
use vqa_core::metrics::{krippendorff_alpha, Alpha, RatingCriterion, RatingRecord};
use vqa_core::scheduler::{Category, Level};

use crate::error::ServiceError;
use crate::pipeline::read_export;
use crate::run::{RunDir, Stage};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown annotator {0:?}")]
    UnknownAnnotator(String),
    #[error("sample {0:?} is not in the review subset")]
    UnknownSample(String),
    #[error("rating must be between 1 and 5, got {0}")]
    InvalidRating(u8),
    #[error(transparent)]
    Store(#[from] JsonlError),
}

impl ReviewError {
    pub fn code(&self) -> &'static str {
        match self {
            ReviewError::UnknownAnnotator(_) => "unknown_annotator",
            ReviewError::UnknownSample(_) => "unknown_sample",
            ReviewError::InvalidRating(_) => "invalid_rating",
            ReviewError::Store(_) => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub sample_id: String,
    pub image_id: String,
    pub image_uri: Option<String>,
    pub question: String,
    pub answers: Vec<String>,
    pub level: Level,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextSample {
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<ReviewItem>,
    /// Criteria this annotator has already rated on `sample`.
    #[serde(default)]
    pub rated: Vec<RatingCriterion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRating {
    pub run_id: String,
    #[serde(flatten)]
    pub record: RatingRecord,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub run_id: String,
    pub annotator_id: String,
    pub sample_id: String,
    pub criterion: RatingCriterion,
    pub previous: Option<u8>,
    pub rating: Option<u8>,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub overwritten: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub ratings: usize,
    pub completed_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub subset_size: usize,
    pub annotators: BTreeMap<String, AnnotatorProgress>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub ratings: usize,
    pub criteria: BTreeMap<RatingCriterion, Alpha>,
}

type Key = (String, String, RatingCriterion);

pub struct ReviewStore {
    run_id: String,
    items: Vec<ReviewItem>,
    index: BTreeMap<String, usize>,
    annotators: BTreeSet<String>,
    ratings: BTreeMap<Key, StoredRating>,
    ratings_path: PathBuf,
    audit_path: PathBuf,
}

/// Seeded subset of the exported records, in presentation order.
pub fn review_subset(records: Vec<ExportRecord>, size: usize, seed: u64) -> Vec<ExportRecord> {
    let mut records = records;
    records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    records.truncate(size);
    records
}

impl ReviewStore {
    pub fn open(run: &RunDir) -> Result<ReviewStore, ServiceError> {
        run.require(Stage::Export)?;
        if !run.manifest.is_completed(Stage::Export) {
            return Err(ServiceError::StageOrder {
                stage: "serve".into(),
                requires: Stage::Export,
            });
        }
        let corpus = CorpusStore::load(&run.corpus_dir())?;
        let records = read_export(&run.export_dir())?;
        let subset = review_subset(records, run.config.review.subset_size, run.config.seed);
        let items: Vec<ReviewItem> = subset
            .into_iter()
            .map(|r| ReviewItem {
                image_uri: corpus.get(&r.image_id).map(|c| c.uri.clone()),
                sample_id: r.sample_id,
                image_id: r.image_id,
                question: r.question,
                answers: r.answers,
                level: r.level,
                category: r.category,
            })
            .collect();
        let mut store = ReviewStore {
            run_id: run.manifest.run_id.clone(),
            index: items.iter().enumerate().map(|(i, it)| (it.sample_id.clone(), i)).collect(),
            items,
            annotators: run.config.review.annotators.iter().cloned().collect(),
            ratings: BTreeMap::new(),
            ratings_path: run.ratings_path(),
            audit_path: run.ratings_audit_path(),
        };
        if store.ratings_path.exists() {
            let stored: Vec<StoredRating> = jsonl::read_tolerant(&store.ratings_path)?;
            for s in stored {
                store.ratings.insert(key(&s.record), s);
            }
        }
        Ok(store)
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    fn check_annotator(&self, id: &str) -> Result<(), ReviewError> {
        if self.annotators.contains(id) {
            Ok(())
        } else {
            Err(ReviewError::UnknownAnnotator(id.to_string()))
        }
    }

    fn rated(&self, annotator: &str, sample_id: &str) -> Vec<RatingCriterion> {
        RatingCriterion::ALL
            .into_iter()
            .filter(|c| {
                self.ratings
                    .contains_key(&(annotator.to_string(), sample_id.to_string(), *c))
            })
            .collect()
    }

    pub fn next(&self, annotator: &str) -> Result<NextSample, ReviewError> {
        self.check_annotator(annotator)?;
        for item in &self.items {
            let rated = self.rated(annotator, &item.sample_id);
            if rated.len() < RatingCriterion::ALL.len() {
                return Ok(NextSample {
                    done: false,
                    sample: Some(item.clone()),
                    rated,
                });
            }
        }
        Ok(NextSample {
            done: true,
            sample: None,
            rated: Vec::new(),
        })
    }

    pub fn submit(&mut self, record: RatingRecord) -> Result<SubmitOutcome, ReviewError> {
        self.check_annotator(&record.annotator_id)?;
        if !self.index.contains_key(&record.sample_id) {
            return Err(ReviewError::UnknownSample(record.sample_id));
        }
        if let Some(r) = record.rating.filter(|r| !(1..=5).contains(r)) {
            return Err(ReviewError::InvalidRating(r));
        }
        let now = Utc::now();
        let k = key(&record);
        let stored = StoredRating {
            run_id: self.run_id.clone(),
            record,
            at: now,
        };
        match self.ratings.insert(k.clone(), stored.clone()) {
            None => {
                jsonl::append(&self.ratings_path, &[stored])?;
                Ok(SubmitOutcome { overwritten: false })
            }
            Some(prev) => {
                let entry = AuditEntry {
                    run_id: self.run_id.clone(),
                    annotator_id: k.0,
                    sample_id: k.1,
                    criterion: k.2,
                    previous: prev.record.rating,
                    rating: stored.record.rating,
                    at: now,
                };
                jsonl::append(&self.audit_path, &[entry])?;
                let all: Vec<&StoredRating> = self.ratings.values().collect();
                jsonl::write(&self.ratings_path, &all)?;
                Ok(SubmitOutcome { overwritten: true })
            }
        }
    }

    pub fn progress(&self) -> Progress {
        let annotators = self
            .annotators
            .iter()
            .map(|a| {
                let ratings = self.ratings.keys().filter(|k| &k.0 == a).count();
                let completed_samples = self
                    .items
                    .iter()
                    .filter(|it| self.rated(a, &it.sample_id).len() == RatingCriterion::ALL.len())
                    .count();
                (
                    a.clone(),
                    AnnotatorProgress {
                        ratings,
                        completed_samples,
                    },
                )
            })
            .collect();
        Progress {
            subset_size: self.items.len(),
            annotators,
        }
    }

    pub fn agreement(&self) -> Agreement {
        let records: Vec<RatingRecord> = self.ratings.values().map(|s| s.record.clone()).collect();
        Agreement {
            ratings: records.len(),
            criteria: RatingCriterion::ALL
                .into_iter()
                .map(|c| (c, krippendorff_alpha(&records, c)))
                .collect(),
        }
    }
}

fn key(r: &RatingRecord) -> Key {
    (r.annotator_id.clone(), r.sample_id.clone(), r.criterion)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::pipeline::{self, GenerateOptions, IngestSource};
    use std::path::Path;

    pub(crate) fn exported_run(dir: &Path, subset: usize) -> RunDir {
        let mut cfg = PipelineConfig {
            seed: 5,
            mock: true,
            ..Default::default()
        };
        cfg.generation.target = 80;
        cfg.review.subset_size = subset;
        let mut run = RunDir::create(dir, cfg).unwrap();
        pipeline::ingest(&mut run, IngestSource::Synthetic(60)).unwrap();
        pipeline::generate(&mut run, &GenerateOptions::default()).unwrap();
        pipeline::qc(&mut run).unwrap();
        pipeline::balance(&mut run).unwrap();
        pipeline::export(&mut run).unwrap();
        run
    }

    fn rating(a: &str, s: &str, c: RatingCriterion, r: Option<u8>) -> RatingRecord {
        RatingRecord {
            annotator_id: a.into(),
            sample_id: s.into(),
            criterion: c,
            rating: r,
        }
    }

    #[test]
    fn subset_is_stable_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let run = exported_run(dir.path(), 10);
        let a = ReviewStore::open(&run).unwrap();
        let b = ReviewStore::open(&RunDir::open(dir.path()).unwrap()).unwrap();
        assert_eq!(a.items(), b.items());
        assert_eq!(a.items().len(), 10);
    }

    #[test]
    fn subset_depends_on_seed_not_input_order() {
        let recs: Vec<ExportRecord> = (0..50)
            .map(|i| ExportRecord {
                sample_id: format!("q{i:06}"),
                image_id: format!("img{i}"),
                question: "Gì?".into(),
                answers: vec!["a".into()],
                category: Category::YesNo,
                level: Level::new(2).unwrap(),
                pass_count: 10,
                grounding_score: None,
                split: "train".into(),
            })
            .collect();
        let mut reversed = recs.clone();
        reversed.reverse();
        assert_eq!(review_subset(recs.clone(), 20, 1), review_subset(reversed, 20, 1));
        assert_ne!(review_subset(recs.clone(), 20, 1), review_subset(recs, 20, 2));
    }

    #[test]
    fn duplicate_rating_overwrites_with_audit() {
        let dir = tempfile::tempdir().unwrap();
        let run = exported_run(dir.path(), 5);
        let mut store = ReviewStore::open(&run).unwrap();
        let sid = store.items()[0].sample_id.clone();
        let r = rating("ann1", &sid, RatingCriterion::Fluency, Some(4));
        assert!(!store.submit(r.clone()).unwrap().overwritten);
        assert!(store.submit(r).unwrap().overwritten);
        let stored: Vec<StoredRating> = jsonl::read(&run.ratings_path()).unwrap();
        let audit: Vec<AuditEntry> = jsonl::read(&run.ratings_audit_path()).unwrap();
        assert_eq!(stored.len(), 1);
        assert_eq!(audit.len(), 1);
        assert_eq!(audit[0].previous, Some(4));
    }

    #[test]
    fn rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let run = exported_run(dir.path(), 5);
        let mut store = ReviewStore::open(&run).unwrap();
        let sid = store.items()[0].sample_id.clone();
        assert!(matches!(
            store.submit(rating("eve", &sid, RatingCriterion::Fluency, Some(3))),
            Err(ReviewError::UnknownAnnotator(_))
        ));
        assert!(matches!(
            store.submit(rating("ann1", "nope", RatingCriterion::Fluency, Some(3))),
            Err(ReviewError::UnknownSample(_))
        ));
        assert!(matches!(
            store.submit(rating("ann1", &sid, RatingCriterion::Fluency, Some(6))),
            Err(ReviewError::InvalidRating(6))
        ));
        store.submit(rating("ann1", &sid, RatingCriterion::Fluency, None)).unwrap();
    }

    #[test]
    fn next_advances_and_progress_counts() {
        let dir = tempfile::tempdir().unwrap();
        let run = exported_run(dir.path(), 3);
        let mut store = ReviewStore::open(&run).unwrap();
        let first = store.next("ann2").unwrap().sample.unwrap();
        for c in RatingCriterion::ALL {
            store.submit(rating("ann2", &first.sample_id, c, Some(3))).unwrap();
        }
        let second = store.next("ann2").unwrap().sample.unwrap();
        assert_ne!(first.sample_id, second.sample_id);
        assert_eq!(store.next("ann1").unwrap().sample.unwrap(), first);
        let p = store.progress();
        assert_eq!(p.annotators["ann2"].completed_samples, 1);
        assert_eq!(p.annotators["ann2"].ratings, 3);
        assert_eq!(p.annotators["ann1"].ratings, 0);
    }

    #[test]
    fn ratings_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let run = exported_run(dir.path(), 3);
        let sid;
        {
            let mut store = ReviewStore::open(&run).unwrap();
            sid = store.items()[0].sample_id.clone();
            store.submit(rating("ann1", &sid, RatingCriterion::Fluency, Some(2))).unwrap();
            store.submit(rating("ann1", &sid, RatingCriterion::Fluency, Some(5))).unwrap();
        }
        let store = ReviewStore::open(&run).unwrap();
        assert_eq!(store.progress().annotators["ann1"].ratings, 1);
        let rated = store.next("ann1").unwrap().rated;
        assert_eq!(rated, vec![RatingCriterion::Fluency]);
    }

    #[test]
    fn identical_ratings_agree_perfectly() {
        let dir = tempfile::tempdir().unwrap();
        let run = exported_run(dir.path(), 8);
        let mut store = ReviewStore::open(&run).unwrap();
        let ids: Vec<String> = store.items().iter().map(|i| i.sample_id.clone()).collect();
        for (n, sid) in ids.iter().enumerate() {
            for c in RatingCriterion::ALL {
                for a in ["ann1", "ann2", "ann3"] {
                    store.submit(rating(a, sid, c, Some((n % 5) as u8 + 1))).unwrap();
                }
            }
        }
        let ag = store.agreement();
        for c in RatingCriterion::ALL {
            assert_eq!(ag.criteria[&c], Alpha::Value(1.0));
        }
    }
}
