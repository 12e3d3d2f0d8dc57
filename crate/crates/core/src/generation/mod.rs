//! Constraint-guided question/answer generation.
//!
//! For each request slot the runner picks an image, asks the scheduler for a
//! `(level, category)` assignment among the levels the image's captions can
//! support, prompts the generator, and parses the reply against the output
//! contract. Every slot is committed exactly once, failures included, so a
//! run can resume from the committed log.

pub mod context;
mod output;
pub mod prompt;
mod sample;

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use context::{build_context, feasibility, ContextConfig, Feasibility};
pub use output::{parse_output, render, ParsedOutput};
pub use prompt::build_prompt;
pub use sample::{check_text, dedupe, sanity_filter, QaSample, SampleError, SampleStatus};

use crate::corpus::{CorpusStore, ImageRecord};
use crate::gateway::Client;
use crate::scheduler::{Category, CategoryTable, Level, SchedulerError, SchedulerState, LEVEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub answer_count: usize,
    pub answer_min_words: usize,
    pub answer_max_words: usize,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            answer_count: 5,
            answer_min_words: 1,
            answer_max_words: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub request_id: String,
    pub image_id: String,
    pub context: String,
    pub level: Level,
    pub category: Category,
    pub language: String,
    pub constraints: Constraints,
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("image {0} has no captions")]
    MissingCaptions(String),
    #[error("no image in the corpus has captions")]
    NoEligibleImages,
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("commit failed: {0}")]
    Sink(String),
}

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    pub context: ContextConfig,
    pub constraints: Constraints,
    pub language: String,
    pub table: CategoryTable,
    pub targets: [f64; LEVEL_COUNT],
    pub parallelism: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            context: ContextConfig::default(),
            constraints: Constraints::default(),
            language: "vi".into(),
            table: CategoryTable::default(),
            targets: crate::scheduler::DEFAULT_TARGETS,
            parallelism: 1,
            seed: 0,
        }
    }
}

pub fn sample_id_for_slot(slot: usize) -> String {
    format!("q{slot:06}")
}

fn slot_of(sample_id: &str) -> Option<usize> {
    sample_id.strip_prefix('q')?.parse().ok()
}

/// Counts from a committed log: `generated` excludes slots that failed.
pub fn scheduler_state_from(
    samples: &[QaSample],
    targets: [f64; LEVEL_COUNT],
) -> Result<SchedulerState, SchedulerError> {
    let mut state = SchedulerState::new(targets)?;
    for s in samples {
        if !is_failed_slot(s) {
            state.record_accept(s.level);
        }
    }
    Ok(state)
}

/// Slots whose generation failed are committed as rejected records with a
/// `parse:` or `provider:` reason.
pub fn is_failed_slot(sample: &QaSample) -> bool {
    sample.status == SampleStatus::Rejected
        && sample
            .rejection_reason
            .as_deref()
            .is_some_and(|r| r.starts_with("parse:") || r.starts_with("provider:"))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub slots_run: usize,
    pub generated: usize,
    pub failed: usize,
    pub total_generated: usize,
    pub level_counts: [u64; LEVEL_COUNT],
    pub complete: bool,
}

/// Commit log guaranteeing at most one committed record per request id.
#[derive(Debug, Default)]
pub struct CommitLog {
    committed: HashSet<String>,
}

impl CommitLog {
    pub fn from_existing(samples: &[QaSample]) -> Self {
        CommitLog {
            committed: samples.iter().map(|s| s.sample_id.clone()).collect(),
        }
    }

    /// Returns false (and commits nothing) if the id was already committed.
    pub fn try_commit(&mut self, sample_id: &str) -> bool {
        self.committed.insert(sample_id.to_string())
    }

    pub fn len(&self) -> usize {
        self.committed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.committed.is_empty()
    }
}

struct Planned {
    slot: usize,
    request: Option<GenerationRequest>,
    failure: Option<(String, Level, Category)>,
}

pub struct GenerationRun<'a> {
    client: &'a Client,
    config: &'a GenerationConfig,
    order: Vec<&'a ImageRecord>,
    feasible: BTreeMap<String, Feasibility>,
}

impl<'a> GenerationRun<'a> {
    pub fn new(
        corpus: &'a CorpusStore,
        client: &'a Client,
        config: &'a GenerationConfig,
    ) -> Result<Self, GenerationError> {
        let mut order: Vec<&ImageRecord> =
            corpus.records().filter(|r| !r.captions.is_empty()).collect();
        if order.is_empty() {
            return Err(GenerationError::NoEligibleImages);
        }
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        let mut feasible = BTreeMap::new();
        for r in &order {
            feasible.insert(
                r.image_id.clone(),
                feasibility(r, &config.context, &config.table)?,
            );
        }
        Ok(GenerationRun {
            client,
            config,
            order,
            feasible,
        })
    }

    fn plan(&self, slot: usize, state: &SchedulerState) -> Result<Planned, GenerationError> {
        let record = self.order[slot % self.order.len()];
        let f = &self.feasible[&record.image_id];
        let (level, category) = state.assign(&f.levels, &f.categories, &self.config.table)?;
        let context = build_context(record, &self.config.context)?;
        Ok(Planned {
            slot,
            request: Some(GenerationRequest {
                request_id: sample_id_for_slot(slot),
                image_id: record.image_id.clone(),
                context,
                level,
                category,
                language: self.config.language.clone(),
                constraints: self.config.constraints,
            }),
            failure: None,
        })
    }

    fn execute(&self, req: &GenerationRequest) -> QaSample {
        let mut sample = QaSample {
            sample_id: req.request_id.clone(),
            image_id: req.image_id.clone(),
            question: String::new(),
            answers: Vec::new(),
            category: req.category,
            level: req.level,
            status: SampleStatus::Generated,
            rejection_reason: None,
        };
        let outcome = self
            .client
            .complete(&build_prompt(req))
            .map_err(|e| format!("provider:{e}"))
            .and_then(|raw| {
                parse_output(&raw, &req.constraints).map_err(|e| format!("parse:{}", e.code()))
            });
        match outcome {
            Ok(parsed) => {
                sample.question = parsed.question;
                sample.answers = parsed.answers;
            }
            Err(reason) => sample.reject(reason),
        }
        sample
    }

    /// Runs slots until `target` samples have been generated in total.
    ///
    /// `existing` is the committed log from earlier runs; `max_slots` bounds
    /// the work done by this call. Each batch of `parallelism` slots is
    /// planned sequentially, executed concurrently, then handed to `sink`
    /// in slot order.
    pub fn run(
        &self,
        existing: &[QaSample],
        target: usize,
        max_slots: Option<usize>,
        sink: &mut dyn FnMut(&[QaSample]) -> Result<(), String>,
    ) -> Result<GenerationSummary, GenerationError> {
        let mut state = scheduler_state_from(existing, self.config.targets)?;
        let mut log = CommitLog::from_existing(existing);
        let mut generated_total = state.total() as usize;
        let mut next_slot = existing
            .iter()
            .filter_map(|s| slot_of(&s.sample_id))
            .max()
            .map_or(0, |m| m + 1);
        // give up if the generator keeps failing
        let slot_limit = target.saturating_mul(4) + 100;
        let parallelism = self.config.parallelism.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| GenerationError::Sink(e.to_string()))?;

        let mut summary = GenerationSummary::default();
        while generated_total < target && next_slot < slot_limit {
            if max_slots.is_some_and(|m| summary.slots_run >= m) {
                break;
            }
            let remaining_budget = max_slots.map_or(usize::MAX, |m| m - summary.slots_run);
            // batches stay aligned to multiples of `parallelism`
            let batch_end = (next_slot / parallelism + 1) * parallelism;
            let batch_len = (batch_end - next_slot)
                .min(target - generated_total)
                .min(remaining_budget);

            let mut tentative = state.clone();
            let mut planned = Vec::with_capacity(batch_len);
            for slot in next_slot..next_slot + batch_len {
                let p = match self.plan(slot, &tentative) {
                    Ok(p) => p,
                    Err(GenerationError::Scheduler(e)) => {
                        let record = self.order[slot % self.order.len()];
                        Planned {
                            slot,
                            request: None,
                            failure: Some((
                                format!("{}:{e}", record.image_id),
                                Level::MIN,
                                Category::ObjectAttribute,
                            )),
                        }
                    }
                    Err(e) => return Err(e),
                };
                if let Some(req) = &p.request {
                    tentative.record_accept(req.level);
                }
                planned.push(p);
            }

            let results: Vec<QaSample> = pool.install(|| {
                planned
                    .par_iter()
                    .map(|p| match (&p.request, &p.failure) {
                        (Some(req), _) => self.execute(req),
                        (None, Some((reason, level, category))) => {
                            let record = self.order[p.slot % self.order.len()];
                            let mut s = QaSample {
                                sample_id: sample_id_for_slot(p.slot),
                                image_id: record.image_id.clone(),
                                question: String::new(),
                                answers: Vec::new(),
                                category: *category,
                                level: *level,
                                status: SampleStatus::Generated,
                                rejection_reason: None,
                            };
                            s.reject(format!("provider:unassignable {reason}"));
                            s
                        }
                        (None, None) => unreachable!("planned slot without request or failure"),
                    })
                    .collect()
            });

            let fresh: Vec<QaSample> = results
                .into_iter()
                .filter(|s| log.try_commit(&s.sample_id))
                .collect();
            sink(&fresh).map_err(GenerationError::Sink)?;
            for s in &fresh {
                if is_failed_slot(s) {
                    summary.failed += 1;
                } else {
                    state.record_accept(s.level);
                    summary.generated += 1;
                    generated_total += 1;
                }
            }
            summary.slots_run += batch_len;
            next_slot += batch_len;
        }
        summary.total_generated = generated_total;
        summary.level_counts = state.counts();
        summary.complete = generated_total >= target;
        if !summary.complete && next_slot >= slot_limit {
            log::warn!("stopped after {slot_limit} slots with {generated_total}/{target} generated");
        }
        Ok(summary)
    }
}
