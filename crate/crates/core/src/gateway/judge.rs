//! Judge scoring prompt and response parsing.
//!
//! Judges reply with one `criterion_id: score` line per criterion on their
//! native scale; scores are divided by the endpoint's scale and clamped to
//! `[0, 1]` here, so downstream voting never sees per-judge scales.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PromptSpec;
use crate::generation::QaSample;
use crate::validation::CriteriaRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub sample_id: String,
    pub endpoint_id: String,
    /// One normalized score per registry entry, in registry order.
    pub scores: Vec<f64>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeParseError {
    #[error("no score for criterion {0}")]
    Missing(String),
    #[error("score for {criterion} is not a finite number: {raw:?}")]
    Invalid { criterion: String, raw: String },
}

pub fn build_judge_prompt(
    sample: &QaSample,
    image_uri: Option<&str>,
    registry: &CriteriaRegistry,
    scale: f64,
) -> PromptSpec {
    let system = format!(
        "You are a strict, independent quality judge for visual question answering data. \
         Score every criterion on its own, on a scale from 0 to {scale}."
    );
    let (level_name, level_def) = sample.level.describe();
    let mut user = String::with_capacity(2048);
    let _ = writeln!(user, "Sample: {}", sample.sample_id);
    let _ = writeln!(user, "Image: {}", image_uri.unwrap_or("(not provided)"));
    let _ = writeln!(user, "Category: {}", sample.category.display_name());
    let _ = writeln!(
        user,
        "Assigned reasoning level {} ({level_name}): {level_def}",
        sample.level
    );
    let _ = writeln!(user, "Question: {}", sample.question);
    let _ = writeln!(user, "Answers:");
    for (i, a) in sample.answers.iter().enumerate() {
        let _ = writeln!(user, "{}. {a}", i + 1);
    }
    let _ = writeln!(user);
    let _ = writeln!(user, "Criteria:");
    for c in registry.entries() {
        let _ = writeln!(user, "- {} ({}): {}", c.id, c.name, c.definition);
    }
    let _ = writeln!(user);
    let _ = write!(
        user,
        "Reply with exactly one line per criterion in the form `<criterion_id>: <score>`, \
         where score is a number from 0 to {scale}. Do not add explanations."
    );
    PromptSpec {
        system,
        user,
        image_uri: image_uri.map(str::to_string),
    }
}

fn split_line(line: &str) -> Option<(&str, &str)> {
    let line = line.trim().trim_start_matches(['-', '*', '•']).trim();
    let idx = line.find([':', '='])?;
    let key = line[..idx].trim().trim_matches(['`', '*']);
    let value = line[idx + 1..].trim().trim_matches(['`', '*']);
    Some((key, value))
}

pub fn parse_judge_response(
    raw: &str,
    endpoint_id: &str,
    sample_id: &str,
    registry: &CriteriaRegistry,
    scale: f64,
) -> Result<JudgeResponse, JudgeParseError> {
    let mut scores: Vec<Option<f64>> = vec![None; registry.len()];
    let mut warnings = Vec::new();
    for (key, value) in raw.lines().filter_map(split_line) {
        let Some(idx) = registry.index_of(key) else {
            continue;
        };
        // take the leading number, tolerating "7/10" or trailing notes
        let token = value
            .split(|c: char| c.is_whitespace() || c == '/' || c == ',')
            .next()
            .unwrap_or("");
        let parsed: f64 = token.parse().map_err(|_| JudgeParseError::Invalid {
            criterion: key.to_string(),
            raw: value.to_string(),
        })?;
        if !parsed.is_finite() {
            return Err(JudgeParseError::Invalid {
                criterion: key.to_string(),
                raw: value.to_string(),
            });
        }
        let normalized = parsed / scale;
        let clamped = normalized.clamp(0.0, 1.0);
        if clamped != normalized {
            warnings.push(format!("{key}: score {parsed} outside 0..={scale}, clamped"));
        }
        scores[idx] = Some(clamped);
    }
    let scores = scores
        .into_iter()
        .zip(registry.ids())
        .map(|(s, id)| s.ok_or_else(|| JudgeParseError::Missing(id.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(JudgeResponse {
        sample_id: sample_id.to_string(),
        endpoint_id: endpoint_id.to_string(),
        scores,
        warnings,
    })
}

/// Renders scores on `scale` in the reply format judges are asked for.
pub fn render_scores(registry: &CriteriaRegistry, scores: &[f64], scale: f64) -> String {
    let mut out = String::new();
    for (id, s) in registry.ids().zip(scores) {
        let _ = writeln!(out, "{id}: {}", s * scale);
    }
    out
}
