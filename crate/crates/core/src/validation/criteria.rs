use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ValidationError;

pub const CRITERIA_COUNT: usize = 18;

/// Number of registry entries that may be replaced through configuration.
pub const CONFIGURABLE_SLOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionGroup {
    VisualQuality,
    ContextualComplexity,
    LinguisticQuality,
    GroundingReasoning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: String,
    pub name: String,
    pub group: CriterionGroup,
    pub definition: String,
    /// When false, lower scores are better and binarization flips.
    #[serde(default = "yes")]
    pub higher_is_better: bool,
}

fn yes() -> bool {
    true
}

impl Criterion {
    pub fn new(id: &str, name: &str, group: CriterionGroup, definition: &str) -> Self {
        Criterion {
            id: id.into(),
            name: name.into(),
            group,
            definition: definition.into(),
            higher_is_better: true,
        }
    }

    fn lower_is_better(mut self) -> Self {
        self.higher_is_better = false;
        self
    }
}

/// The 18 quality criteria every judge scores, in score-vector order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaRegistry {
    entries: Vec<Criterion>,
}

pub const VISUAL_GROUNDING: &str = "visual_grounding";

fn fixed_criteria() -> Vec<Criterion> {
    use CriterionGroup::*;
    vec![
        Criterion::new(
            "image_clarity",
            "Image clarity",
            VisualQuality,
            "The image is sharp and well exposed enough to answer the question.",
        ),
        Criterion::new(
            "object_occlusion",
            "Object occlusion",
            VisualQuality,
            "How much the objects the question refers to are hidden or cut off (higher means more occluded).",
        )
        .lower_is_better(),
        Criterion::new(
            "discriminability",
            "Discriminability",
            VisualQuality,
            "The referenced entities can be told apart from similar entities in the image.",
        ),
        Criterion::new(
            "object_density",
            "Object density",
            ContextualComplexity,
            "How many distinct relevant objects the scene contains.",
        ),
        Criterion::new(
            "interaction_level",
            "Interaction level",
            ContextualComplexity,
            "How much the objects or people in the scene interact with each other.",
        ),
        Criterion::new(
            "scene_clutter",
            "Scene clutter",
            ContextualComplexity,
            "How visually cluttered or distracting the scene is (higher means more clutter).",
        )
        .lower_is_better(),
        Criterion::new(
            "grammatical_correctness",
            "Grammatical correctness",
            LinguisticQuality,
            "The question and answers are grammatically correct.",
        ),
        Criterion::new(
            "semantic_unambiguity",
            "Semantic unambiguity",
            LinguisticQuality,
            "The question admits a single clear interpretation.",
        ),
        Criterion::new(
            "qa_structural_validity",
            "QA structural validity",
            LinguisticQuality,
            "The question is a well-formed question and every answer actually answers it.",
        ),
        Criterion::new(
            "syntactic_diversity",
            "Syntactic diversity",
            LinguisticQuality,
            "The phrasing avoids formulaic templates and varies sentence structure.",
        ),
        Criterion::new(
            "question_type_fit",
            "Question-type distribution fit",
            LinguisticQuality,
            "The question clearly belongs to its assigned category.",
        ),
        Criterion::new(
            "language_naturalness",
            "Language naturalness",
            LinguisticQuality,
            "The wording sounds like a fluent native speaker rather than a translation.",
        ),
        Criterion::new(
            "bias_sensitivity",
            "Bias sensitivity",
            LinguisticQuality,
            "The question is free of subjective, stereotyped or culturally biased content.",
        ),
        Criterion::new(
            VISUAL_GROUNDING,
            "Visual grounding score",
            GroundingReasoning,
            "Answering the question genuinely requires looking at the image.",
        ),
        Criterion::new(
            "reasoning_depth_consistency",
            "Reasoning-depth consistency",
            GroundingReasoning,
            "The reasoning the question demands matches its assigned reasoning level.",
        ),
    ]
}

/// Default contents of the configurable slots.
pub fn default_slots() -> [Criterion; CONFIGURABLE_SLOTS] {
    use CriterionGroup::*;
    [
        Criterion::new(
            "answer_consensus",
            "Answer consensus",
            LinguisticQuality,
            "The five answers agree with each other in substance.",
        ),
        Criterion::new(
            "answer_length_validity",
            "Answer-length validity",
            LinguisticQuality,
            "Each answer is short, specific and between one and ten words.",
        ),
        Criterion::new(
            "caption_question_entailment",
            "Caption-question entailment",
            GroundingReasoning,
            "The question and answers are supported by the image description.",
        ),
    ]
}

impl Default for CriteriaRegistry {
    fn default() -> Self {
        CriteriaRegistry::with_slots(default_slots()).expect("default registry is valid")
    }
}

impl CriteriaRegistry {
    pub fn with_slots(slots: [Criterion; CONFIGURABLE_SLOTS]) -> Result<Self, ValidationError> {
        let mut entries = fixed_criteria();
        entries.extend(slots);
        CriteriaRegistry::from_entries(entries)
    }

    pub fn from_entries(entries: Vec<Criterion>) -> Result<Self, ValidationError> {
        if entries.len() != CRITERIA_COUNT {
            return Err(ValidationError::Registry(format!(
                "expected {CRITERIA_COUNT} criteria, got {}",
                entries.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &entries {
            if c.id.trim().is_empty() || c.id.contains([':', '=', ' ']) {
                return Err(ValidationError::Registry(format!("invalid criterion id {:?}", c.id)));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(ValidationError::Registry(format!("duplicate criterion id {}", c.id)));
            }
        }
        Ok(CriteriaRegistry { entries })
    }

    pub fn entries(&self) -> &[Criterion] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|c| c.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|c| c.id.as_str())
    }
}
