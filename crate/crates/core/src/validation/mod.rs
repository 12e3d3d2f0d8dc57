//! Post-generation quality control: ensemble scoring, per-judge median
//! thresholds, majority voting and the retention rule.

mod criteria;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use criteria::{
    default_slots, CriteriaRegistry, Criterion, CriterionGroup, CONFIGURABLE_SLOTS, CRITERIA_COUNT,
    VISUAL_GROUNDING,
};

use crate::gateway::{check_ensemble, Client, JudgeResponse};
use crate::generation::{sanity_filter, Constraints, QaSample, SampleStatus};
use crate::scheduler::CategoryTable;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("invalid criteria registry: {0}")]
    Registry(String),
    #[error("invalid ensemble: {0}")]
    Ensemble(String),
    #[error("invalid qc config: {0}")]
    Config(String),
    #[error("{endpoint} returned {found} scores for {sample}, expected {expected}")]
    Shape {
        sample: String,
        endpoint: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    #[default]
    PerJudge,
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    pub min_pass: usize,
    /// Criterion ids that must pass regardless of the count.
    pub mandatory: Vec<String>,
    pub threshold_mode: ThresholdMode,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            min_pass: 9,
            mandatory: Vec::new(),
            threshold_mode: ThresholdMode::PerJudge,
        }
    }
}

/// Responses collected for one sample; judges that failed are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub sample_id: String,
    pub rows: Vec<JudgeResponse>,
}

impl ScoreMatrix {
    pub fn quorum(&self) -> usize {
        self.rows.len()
    }
}

/// Smallest number of responding judges for an ensemble of `size`.
pub fn quorum_required(size: usize) -> usize {
    size.div_ceil(2)
}

/// Median with the mean of the two central values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub mode: ThresholdMode,
    /// endpoint id -> per-criterion median (None when the judge never scored).
    pub medians: BTreeMap<String, Vec<Option<f64>>>,
}

impl ThresholdTable {
    pub fn get(&self, endpoint_id: &str, criterion: usize) -> Option<f64> {
        self.medians.get(endpoint_id)?.get(criterion).copied().flatten()
    }
}

pub fn compute_thresholds(
    matrices: &[ScoreMatrix],
    criteria: usize,
    mode: ThresholdMode,
) -> ThresholdTable {
    let mut columns: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for m in matrices {
        for row in &m.rows {
            let cols = columns
                .entry(row.endpoint_id.as_str())
                .or_insert_with(|| vec![Vec::new(); criteria]);
            for (c, s) in row.scores.iter().enumerate().take(criteria) {
                cols[c].push(*s);
            }
        }
    }
    let medians = match mode {
        ThresholdMode::PerJudge => columns
            .iter()
            .map(|(id, cols)| (id.to_string(), cols.iter().map(|c| median(c)).collect()))
            .collect(),
        ThresholdMode::Pooled => {
            let pooled: Vec<Option<f64>> = (0..criteria)
                .map(|c| {
                    let all: Vec<f64> = columns.values().flat_map(|cols| cols[c].iter().copied()).collect();
                    median(&all)
                })
                .collect();
            columns
                .keys()
                .map(|id| (id.to_string(), pooled.clone()))
                .collect()
        }
    };
    ThresholdTable { mode, medians }
}

/// Binarizes one score against its threshold. Ties pass in both polarities.
pub fn binarize(score: f64, threshold: f64, higher_is_better: bool) -> bool {
    if higher_is_better {
        score >= threshold
    } else {
        score <= threshold
    }
}

/// Strict majority of the judges that voted.
pub fn majority(passes: usize, voters: usize) -> bool {
    voters > 0 && passes * 2 > voters
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub sample_id: String,
    pub criteria: Vec<bool>,
    pub pass_count: usize,
    pub retained: bool,
    /// Ensemble mean of the visual grounding score.
    pub grounding_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Decided(Verdict),
    Undecided { sample_id: String, quorum: usize },
}

pub fn binarize_and_vote(
    matrix: &ScoreMatrix,
    thresholds: &ThresholdTable,
    registry: &CriteriaRegistry,
    config: &QcConfig,
    ensemble_size: usize,
) -> Outcome {
    if matrix.quorum() < quorum_required(ensemble_size) {
        return Outcome::Undecided {
            sample_id: matrix.sample_id.clone(),
            quorum: matrix.quorum(),
        };
    }
    let criteria: Vec<bool> = registry
        .entries()
        .iter()
        .enumerate()
        .map(|(c, criterion)| {
            let mut voters = 0;
            let mut passes = 0;
            for row in &matrix.rows {
                let (Some(t), Some(&s)) = (thresholds.get(&row.endpoint_id, c), row.scores.get(c)) else {
                    continue;
                };
                voters += 1;
                if binarize(s, t, criterion.higher_is_better) {
                    passes += 1;
                }
            }
            majority(passes, voters)
        })
        .collect();
    let pass_count = criteria.iter().filter(|p| **p).count();
    let mandatory_ok = config
        .mandatory
        .iter()
        .filter_map(|id| registry.index_of(id))
        .all(|i| criteria[i]);
    let grounding_score = registry.index_of(VISUAL_GROUNDING).and_then(|g| {
        let vals: Vec<f64> = matrix.rows.iter().filter_map(|r| r.scores.get(g).copied()).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    });
    Outcome::Decided(Verdict {
        sample_id: matrix.sample_id.clone(),
        criteria,
        pass_count,
        retained: pass_count >= config.min_pass && mandatory_ok,
        grounding_score,
    })
}

/// Scores every sample with every judge concurrently. A judge error is an
/// abstention and is logged.
pub fn score_batch(
    samples: &[QaSample],
    judges: &[Client],
    registry: &CriteriaRegistry,
    image_uri: &(dyn Fn(&str) -> Option<String> + Sync),
) -> Vec<ScoreMatrix> {
    samples
        .par_iter()
        .map(|s| {
            let uri = image_uri(&s.image_id);
            let rows = judges
                .par_iter()
                .filter_map(|j| match j.judge(s, uri.as_deref(), registry) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        log::warn!("{} abstains on {}: {e}", j.id(), s.sample_id);
                        None
                    }
                })
                .collect();
            ScoreMatrix {
                sample_id: s.sample_id.clone(),
                rows,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub input: usize,
    pub sanity_removed: usize,
    pub scored: usize,
    pub retained: usize,
    pub rejected: usize,
    pub undecided: usize,
    pub retention_rate: f64,
    /// criterion id -> fraction of decided samples passing it.
    pub criterion_pass_rates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default)]
pub struct QcOutcome {
    pub retained: Vec<QaSample>,
    pub rejected: Vec<QaSample>,
    pub undecided: Vec<QaSample>,
    /// Samples removed by the sanity filter (also rejected).
    pub removed: Vec<QaSample>,
    pub verdicts: Vec<Verdict>,
    pub thresholds: Option<ThresholdTable>,
    pub report: QcReport,
}

fn check_config(config: &QcConfig, registry: &CriteriaRegistry) -> Result<(), ValidationError> {
    if config.min_pass > registry.len() {
        return Err(ValidationError::Config(format!(
            "min_pass {} exceeds {} criteria",
            config.min_pass,
            registry.len()
        )));
    }
    if let Some(bad) = config.mandatory.iter().find(|id| registry.index_of(id).is_none()) {
        return Err(ValidationError::Config(format!("unknown mandatory criterion {bad}")));
    }
    Ok(())
}

/// Thresholds and verdicts over already scored sane samples.
pub fn decide(
    samples: Vec<QaSample>,
    matrices: &[ScoreMatrix],
    registry: &CriteriaRegistry,
    config: &QcConfig,
    ensemble_size: usize,
) -> Result<QcOutcome, ValidationError> {
    check_config(config, registry)?;
    for m in matrices {
        for r in &m.rows {
            if r.scores.len() != registry.len() {
                return Err(ValidationError::Shape {
                    sample: m.sample_id.clone(),
                    endpoint: r.endpoint_id.clone(),
                    expected: registry.len(),
                    found: r.scores.len(),
                });
            }
        }
    }
    let by_id: BTreeMap<&str, &ScoreMatrix> =
        matrices.iter().map(|m| (m.sample_id.as_str(), m)).collect();
    let thresholds = compute_thresholds(matrices, registry.len(), config.threshold_mode);

    let outcomes: Vec<Outcome> = samples
        .par_iter()
        .map(|s| match by_id.get(s.sample_id.as_str()) {
            Some(m) => binarize_and_vote(m, &thresholds, registry, config, ensemble_size),
            None => Outcome::Undecided {
                sample_id: s.sample_id.clone(),
                quorum: 0,
            },
        })
        .collect();

    let mut out = QcOutcome::default();
    let mut pass_totals = vec![0usize; registry.len()];
    for (mut s, outcome) in samples.into_iter().zip(outcomes) {
        s.advance(SampleStatus::Scored);
        match outcome {
            Outcome::Decided(v) => {
                for (t, p) in pass_totals.iter_mut().zip(&v.criteria) {
                    *t += usize::from(*p);
                }
                if v.retained {
                    s.advance(SampleStatus::Retained);
                    out.retained.push(s);
                } else {
                    s.reject(format!("qc:pass_count {}", v.pass_count));
                    out.rejected.push(s);
                }
                out.verdicts.push(v);
            }
            Outcome::Undecided { .. } => {
                s.reject("undecided");
                out.undecided.push(s);
            }
        }
    }
    let decided = out.verdicts.len();
    out.report = QcReport {
        input: decided + out.undecided.len(),
        sanity_removed: 0,
        scored: decided + out.undecided.len(),
        retained: out.retained.len(),
        rejected: out.rejected.len(),
        undecided: out.undecided.len(),
        retention_rate: if decided == 0 {
            0.0
        } else {
            out.retained.len() as f64 / decided as f64
        },
        criterion_pass_rates: registry
            .ids()
            .zip(&pass_totals)
            .map(|(id, t)| {
                let rate = if decided == 0 { 0.0 } else { *t as f64 / decided as f64 };
                (id.to_string(), rate)
            })
            .collect(),
    };
    out.thresholds = Some(thresholds);
    Ok(out)
}

/// Sanity filter, ensemble scoring, thresholds and voting.
#[allow(clippy::too_many_arguments)]
pub fn run_qc(
    samples: Vec<QaSample>,
    judges: &[Client],
    registry: &CriteriaRegistry,
    constraints: &Constraints,
    table: &CategoryTable,
    config: &QcConfig,
    image_uri: &(dyn Fn(&str) -> Option<String> + Sync),
) -> Result<(QcOutcome, Vec<ScoreMatrix>), ValidationError> {
    check_ensemble(judges).map_err(ValidationError::Ensemble)?;
    check_config(config, registry)?;
    let input = samples.len();
    let (sane, removed) = sanity_filter(samples, constraints, table);
    let matrices = score_batch(&sane, judges, registry, image_uri);
    let mut out = decide(sane, &matrices, registry, config, judges.len())?;
    out.report.input = input;
    out.report.sanity_removed = removed.len();
    out.removed = removed;
    Ok((out, matrices))
}
