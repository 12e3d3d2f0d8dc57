//! Pipeline configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vqa_core::balance::BalanceConfig;
use vqa_core::gateway::{ModelEndpoint, Role};
use vqa_core::generation::{Constraints, ContextConfig, GenerationConfig};
use vqa_core::scheduler::{Category, CategoryTable, DEFAULT_TARGETS, LEVEL_COUNT};
use vqa_core::validation::{CriteriaRegistry, Criterion, QcConfig, CONFIGURABLE_SLOTS};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub target: usize,
    pub language: String,
    pub separator: String,
    pub max_context_chars: usize,
    pub answer_count: usize,
    pub answer_min_words: usize,
    pub answer_max_words: usize,
    pub level_targets: [f64; LEVEL_COUNT],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category_priority: Option<Vec<Category>>,
    /// Fraction of deliberately malformed mock replies.
    pub mock_malformed_rate: f64,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let c = Constraints::default();
        let ctx = ContextConfig::default();
        GenerationSection {
            target: 1000,
            language: "vi".into(),
            separator: ctx.separator,
            max_context_chars: ctx.max_chars,
            answer_count: c.answer_count,
            answer_min_words: c.answer_min_words,
            answer_max_words: c.answer_max_words,
            level_targets: DEFAULT_TARGETS,
            category_priority: None,
            mock_malformed_rate: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSection {
    pub min_support: f64,
    pub max_spread: f64,
    pub weight_grounding: f64,
    pub weight_depth: f64,
    pub split_ratios: Vec<f64>,
    pub parents: BTreeMap<Category, Category>,
}

impl Default for BalanceSection {
    fn default() -> Self {
        let b = BalanceConfig::default();
        BalanceSection {
            min_support: b.min_support,
            max_spread: b.max_spread,
            weight_grounding: b.weight_grounding,
            weight_depth: b.weight_depth,
            split_ratios: b.split_ratios,
            parents: b.parents,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewSection {
    pub subset_size: usize,
    pub annotators: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
}

impl Default for ReviewSection {
    fn default() -> Self {
        ReviewSection {
            subset_size: 1000,
            annotators: vec!["ann1".into(), "ann2".into(), "ann3".into()],
            token: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Use the offline mock generator and judges instead of `endpoints`.
    pub mock: bool,
    pub mock_judges: usize,
    pub parallelism: usize,
    pub generation: GenerationSection,
    pub qc: QcConfig,
    pub balance: BalanceSection,
    pub review: ReviewSection,
    /// Replacements for the configurable registry slots.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub criteria_slots: Vec<Criterion>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub endpoints: Vec<ModelEndpoint>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            mock: false,
            mock_judges: 3,
            parallelism: 4,
            generation: GenerationSection::default(),
            qc: QcConfig::default(),
            balance: BalanceSection::default(),
            review: ReviewSection::default(),
            criteria_slots: Vec::new(),
            endpoints: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(raw: &str) -> Result<Self, ServiceError> {
        let cfg: PipelineConfig =
            toml::from_str(raw).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ServiceError::io(path, e))?;
        Self::from_toml(&raw)
    }

    pub fn to_toml(&self) -> Result<String, ServiceError> {
        toml::to_string(self).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.table()?;
        self.registry()?;
        self.balance_config().validate()?;
        vqa_core::scheduler::SchedulerState::new(self.generation.level_targets)
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        if self.mock {
            if self.mock_judges < 3 || self.mock_judges.is_multiple_of(2) {
                return Err(ServiceError::Config(format!(
                    "mock_judges must be odd and at least 3, got {}",
                    self.mock_judges
                )));
            }
        } else {
            let judges = self.endpoints.iter().filter(|e| e.role == Role::Judge).count();
            let generators = self.endpoints.iter().filter(|e| e.role == Role::Generator).count();
            if !self.endpoints.is_empty() && (judges < 3 || judges % 2 == 0) {
                return Err(ServiceError::Config(format!(
                    "judge ensemble must have an odd size of at least 3, got {judges}"
                )));
            }
            if !self.endpoints.is_empty() && generators != 1 {
                return Err(ServiceError::Config(format!(
                    "exactly one generator endpoint required, got {generators}"
                )));
            }
        }
        if self.review.annotators.is_empty() {
            return Err(ServiceError::Config("review.annotators is empty".into()));
        }
        Ok(())
    }

    pub fn table(&self) -> Result<CategoryTable, ServiceError> {
        match &self.generation.category_priority {
            Some(p) => CategoryTable::with_priority(p.clone())
                .map_err(|e| ServiceError::Config(e.to_string())),
            None => Ok(CategoryTable::default()),
        }
    }

    pub fn registry(&self) -> Result<CriteriaRegistry, ServiceError> {
        if self.criteria_slots.is_empty() {
            return Ok(CriteriaRegistry::default());
        }
        let slots: [Criterion; CONFIGURABLE_SLOTS] =
            self.criteria_slots.clone().try_into().map_err(|v: Vec<Criterion>| {
                ServiceError::Config(format!(
                    "criteria_slots needs exactly {CONFIGURABLE_SLOTS} entries, got {}",
                    v.len()
                ))
            })?;
        CriteriaRegistry::with_slots(slots).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn constraints(&self) -> Constraints {
        Constraints {
            answer_count: self.generation.answer_count,
            answer_min_words: self.generation.answer_min_words,
            answer_max_words: self.generation.answer_max_words,
        }
    }

    pub fn generation_config(&self) -> Result<GenerationConfig, ServiceError> {
        Ok(GenerationConfig {
            context: ContextConfig {
                separator: self.generation.separator.clone(),
                max_chars: self.generation.max_context_chars,
            },
            constraints: self.constraints(),
            language: self.generation.language.clone(),
            table: self.table()?,
            targets: self.generation.level_targets,
            parallelism: self.parallelism.max(1),
            seed: self.seed,
        })
    }

    pub fn balance_config(&self) -> BalanceConfig {
        BalanceConfig {
            min_support: self.balance.min_support,
            max_spread: self.balance.max_spread,
            weight_grounding: self.balance.weight_grounding,
            weight_depth: self.balance.weight_depth,
            split_ratios: self.balance.split_ratios.clone(),
            parents: self.balance.parents.clone(),
            seed: self.seed,
        }
    }
}
