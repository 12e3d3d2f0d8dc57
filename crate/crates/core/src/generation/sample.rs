use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheduler::{Category, CategoryTable, Level};
use crate::text::{fold, word_count};

use super::Constraints;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Generated,
    Sane,
    Scored,
    Retained,
    Rejected,
    BalancedOut,
    Exported,
}

impl SampleStatus {
    /// Allowed lifecycle edges:
    /// generated -> sane -> scored -> {retained | rejected} -> {exported | balanced_out}.
    /// Sanity and parse failures go straight to rejected.
    pub fn can_advance_to(self, next: SampleStatus) -> bool {
        use SampleStatus::*;
        matches!(
            (self, next),
            (Generated, Sane)
                | (Generated, Rejected)
                | (Sane, Scored)
                | (Sane, Rejected)
                | (Scored, Retained)
                | (Scored, Rejected)
                | (Retained, Exported)
                | (Retained, BalancedOut)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SampleStatus::Generated => "generated",
            SampleStatus::Sane => "sane",
            SampleStatus::Scored => "scored",
            SampleStatus::Retained => "retained",
            SampleStatus::Rejected => "rejected",
            SampleStatus::BalancedOut => "balanced_out",
            SampleStatus::Exported => "exported",
        }
    }
}

/// Violations of the generated-sample contract.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("model output is empty")]
    EmptyOutput,
    #[error("output contains more than one question")]
    MultipleQuestions,
    #[error("question is empty")]
    EmptyQuestion,
    #[error("question does not end with '?'")]
    MissingQuestionMark,
    #[error("expected {expected} answers, found {found}")]
    AnswerCount { expected: usize, found: usize },
    #[error("answer {index} has {words} words, allowed {min}..={max}")]
    AnswerLength {
        index: usize,
        words: usize,
        min: usize,
        max: usize,
    },
    #[error("field spans multiple lines or carries surrounding whitespace")]
    Unnormalized,
    #[error("level {level} is outside the range of category {category}")]
    LevelOutOfRange { level: Level, category: Category },
}

impl SampleError {
    /// Stable short code for reports.
    pub fn code(&self) -> &'static str {
        match self {
            SampleError::EmptyOutput => "empty_output",
            SampleError::MultipleQuestions => "multiple_questions",
            SampleError::EmptyQuestion => "empty_question",
            SampleError::MissingQuestionMark => "missing_question_mark",
            SampleError::AnswerCount { .. } => "answer_count",
            SampleError::AnswerLength { .. } => "answer_length",
            SampleError::Unnormalized => "unnormalized",
            SampleError::LevelOutOfRange { .. } => "level_out_of_range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaSample {
    pub sample_id: String,
    pub image_id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub category: Category,
    pub level: Level,
    pub status: SampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<String>,
}

fn is_normalized(s: &str) -> bool {
    s.trim() == s && !s.contains(['\n', '\r'])
}

/// Checks the question and answer text rules.
pub fn check_text(
    question: &str,
    answers: &[String],
    constraints: &Constraints,
) -> Result<(), SampleError> {
    if question.trim().is_empty() {
        return Err(SampleError::EmptyQuestion);
    }
    if !question.trim_end().ends_with('?') {
        return Err(SampleError::MissingQuestionMark);
    }
    if answers.len() != constraints.answer_count {
        return Err(SampleError::AnswerCount {
            expected: constraints.answer_count,
            found: answers.len(),
        });
    }
    for (i, answer) in answers.iter().enumerate() {
        let words = word_count(answer);
        if words < constraints.answer_min_words || words > constraints.answer_max_words {
            return Err(SampleError::AnswerLength {
                index: i + 1,
                words,
                min: constraints.answer_min_words,
                max: constraints.answer_max_words,
            });
        }
    }
    if !is_normalized(question) || !answers.iter().all(|a| is_normalized(a)) {
        return Err(SampleError::Unnormalized);
    }
    Ok(())
}

impl QaSample {
    pub fn validate(&self, constraints: &Constraints, table: &CategoryTable) -> Result<(), SampleError> {
        check_text(&self.question, &self.answers, constraints)?;
        if !table.admits(self.category, self.level) {
            return Err(SampleError::LevelOutOfRange {
                level: self.level,
                category: self.category,
            });
        }
        Ok(())
    }

    pub fn dedupe_key(&self) -> (String, String) {
        (self.image_id.clone(), fold(&self.question))
    }

    /// Moves to `next`, logging and refusing edges the lifecycle forbids.
    pub fn advance(&mut self, next: SampleStatus) -> bool {
        if self.status.can_advance_to(next) {
            self.status = next;
            true
        } else {
            log::warn!(
                "{}: refusing status change {} -> {}",
                self.sample_id,
                self.status.as_str(),
                next.as_str()
            );
            false
        }
    }

    pub fn reject(&mut self, reason: impl Into<String>) {
        if self.advance(SampleStatus::Rejected) {
            self.rejection_reason = Some(reason.into());
        }
    }
}

/// Keeps the first sample per `(image_id, folded question)`.
pub fn dedupe(samples: Vec<QaSample>) -> (Vec<QaSample>, Vec<QaSample>) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut duplicates = Vec::new();
    for sample in samples {
        if seen.insert(sample.dedupe_key()) {
            kept.push(sample);
        } else {
            duplicates.push(sample);
        }
    }
    (kept, duplicates)
}

/// Invariant check plus deduplication. Passing samples become `sane`;
/// the rest are marked rejected with a `sanity:` reason.
pub fn sanity_filter(
    samples: Vec<QaSample>,
    constraints: &Constraints,
    table: &CategoryTable,
) -> (Vec<QaSample>, Vec<QaSample>) {
    let mut valid = Vec::with_capacity(samples.len());
    let mut removed = Vec::new();
    for mut sample in samples {
        match sample.validate(constraints, table) {
            Ok(()) => valid.push(sample),
            Err(e) => {
                sample.reject(format!("sanity:{}", e.code()));
                removed.push(sample);
            }
        }
    }
    let (mut kept, duplicates) = dedupe(valid);
    for mut dup in duplicates {
        dup.reject("sanity:duplicate");
        removed.push(dup);
    }
    for sample in &mut kept {
        sample.advance(SampleStatus::Sane);
    }
    (kept, removed)
}
