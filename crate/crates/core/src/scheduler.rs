//! Reasoning-level quota scheduling and category assignment.
//!
//! The scheduler keeps the accepted-sample distribution over the five
//! reasoning levels close to a target distribution by always steering the
//! next request toward the feasible level with the largest deficit
//! (target proportion minus observed proportion).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LEVEL_COUNT: usize = 5;

/// Nominal level proportions for levels 1 through 5. They add up to 0.98;
/// [`SchedulerState::new`] rescales any target vector to sum to one.
pub const DEFAULT_TARGETS: [f64; LEVEL_COUNT] = [0.05, 0.24, 0.40, 0.24, 0.05];

/// A reasoning depth level in `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Level(u8);

impl Level {
    pub const MIN: Level = Level(1);
    pub const MAX: Level = Level(5);

    pub fn new(value: u8) -> Result<Self, SchedulerError> {
        if (1..=LEVEL_COUNT as u8).contains(&value) {
            Ok(Level(value))
        } else {
            Err(SchedulerError::InvalidLevel(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn all() -> impl Iterator<Item = Level> {
        (1..=LEVEL_COUNT as u8).map(Level)
    }

    /// Short name and definition used in generation prompts.
    pub fn describe(self) -> (&'static str, &'static str) {
        match self.0 {
            1 => ("Recognition", "Identifying objects or basic attributes"),
            2 => (
                "Spatial & Relational",
                "Reasoning about spatial relationships or simple comparisons",
            ),
            3 => (
                "Compositional",
                "Multi-step reasoning involving multiple objects or actions",
            ),
            4 => (
                "Commonsense & Causal",
                "Inferring intentions, mental states, or causal relationships",
            ),
            _ => (
                "Text-in-Image",
                "Reading and interpreting textual content within the image",
            ),
        }
    }
}

impl TryFrom<u8> for Level {
    type Error = SchedulerError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Level::new(value)
    }
}

impl From<Level> for u8 {
    fn from(level: Level) -> u8 {
        level.0
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Semantic question category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ObjectAttribute,
    LocationSpatial,
    Action,
    Counting,
    YesNo,
    Comparison,
    Relationship,
    Causal,
    ContextualInference,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::ObjectAttribute,
        Category::LocationSpatial,
        Category::Action,
        Category::Counting,
        Category::YesNo,
        Category::Comparison,
        Category::Relationship,
        Category::Causal,
        Category::ContextualInference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::ObjectAttribute => "object_attribute",
            Category::LocationSpatial => "location_spatial",
            Category::Action => "action",
            Category::Counting => "counting",
            Category::YesNo => "yes_no",
            Category::Comparison => "comparison",
            Category::Relationship => "relationship",
            Category::Causal => "causal",
            Category::ContextualInference => "contextual_inference",
        }
    }

    /// Human-readable name used in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Category::ObjectAttribute => "Object / Attribute Identification",
            Category::LocationSpatial => "Location / Spatial Description",
            Category::Action => "Action Description",
            Category::Counting => "Counting",
            Category::YesNo => "Yes/No Question",
            Category::Comparison => "Comparisons",
            Category::Relationship => "Relationships",
            Category::Causal => "Causal Reasoning",
            Category::ContextualInference => "Contextual Inference",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("level {0} is outside 1..=5")]
    InvalidLevel(u8),
    #[error("no feasible reasoning level")]
    NoFeasibleLevel,
    #[error("no feasible category admits level {0}")]
    LevelUnsupported(Level),
    #[error("no feasible category admits any feasible level")]
    NoCategory,
    #[error("invalid targets: {0}")]
    InvalidTargets(String),
    #[error("invalid category table: {0}")]
    InvalidTable(String),
}

/// Inclusive level range permitted for a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRange {
    pub min: Level,
    pub max: Level,
}

impl LevelRange {
    fn new(min: u8, max: u8) -> Self {
        LevelRange {
            min: Level(min),
            max: Level(max),
        }
    }

    pub fn contains(&self, level: Level) -> bool {
        self.min <= level && level <= self.max
    }

    pub fn levels(&self) -> impl Iterator<Item = Level> {
        (self.min.0..=self.max.0).map(Level)
    }
}

/// Category to level-range mapping plus the tie-breaking priority order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    rows: BTreeMap<Category, LevelRange>,
    /// Highest priority first.
    priority: Vec<Category>,
}

impl Default for CategoryTable {
    fn default() -> Self {
        let rows = BTreeMap::from([
            (Category::ObjectAttribute, LevelRange::new(1, 1)),
            (Category::LocationSpatial, LevelRange::new(2, 2)),
            (Category::Action, LevelRange::new(2, 3)),
            (Category::Counting, LevelRange::new(1, 3)),
            (Category::YesNo, LevelRange::new(1, 5)),
            (Category::Comparison, LevelRange::new(2, 5)),
            (Category::Relationship, LevelRange::new(2, 5)),
            (Category::Causal, LevelRange::new(4, 5)),
            (Category::ContextualInference, LevelRange::new(4, 5)),
        ]);
        CategoryTable {
            rows,
            priority: DEFAULT_PRIORITY.to_vec(),
        }
    }
}

pub const DEFAULT_PRIORITY: [Category; 9] = [
    Category::Causal,
    Category::ContextualInference,
    Category::Relationship,
    Category::Comparison,
    Category::Action,
    Category::Counting,
    Category::LocationSpatial,
    Category::YesNo,
    Category::ObjectAttribute,
];

impl CategoryTable {
    /// Default ranges with a custom priority order.
    pub fn with_priority(priority: Vec<Category>) -> Result<Self, SchedulerError> {
        let table = CategoryTable {
            priority,
            ..CategoryTable::default()
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        let unique: BTreeSet<_> = self.priority.iter().collect();
        if unique.len() != self.priority.len() || unique.len() != self.rows.len() {
            return Err(SchedulerError::InvalidTable(
                "priority must list every category exactly once".into(),
            ));
        }
        if self.priority.iter().any(|c| !self.rows.contains_key(c)) {
            return Err(SchedulerError::InvalidTable(
                "priority names a category without a level range".into(),
            ));
        }
        for (cat, range) in &self.rows {
            if range.min > range.max {
                return Err(SchedulerError::InvalidTable(format!("{cat}: empty range")));
            }
        }
        let covered: BTreeSet<Level> = self.rows.values().flat_map(|r| r.levels()).collect();
        if covered.len() != LEVEL_COUNT {
            return Err(SchedulerError::InvalidTable(
                "level ranges do not cover 1..=5".into(),
            ));
        }
        Ok(())
    }

    pub fn range(&self, category: Category) -> LevelRange {
        self.rows[&category]
    }

    pub fn admits(&self, category: Category, level: Level) -> bool {
        self.rows.get(&category).is_some_and(|r| r.contains(level))
    }

    pub fn priority(&self) -> &[Category] {
        &self.priority
    }

    /// Union of the level ranges of the given categories.
    pub fn levels_for(&self, categories: &BTreeSet<Category>) -> BTreeSet<Level> {
        categories
            .iter()
            .filter_map(|c| self.rows.get(c))
            .flat_map(|r| r.levels())
            .collect()
    }
}

/// Accepted-sample counts per level and the target proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    counts: [u64; LEVEL_COUNT],
    targets: [f64; LEVEL_COUNT],
}

impl Default for SchedulerState {
    fn default() -> Self {
        SchedulerState::new(DEFAULT_TARGETS).expect("default targets are valid")
    }
}

impl SchedulerState {
    /// Targets must be finite, non-negative and not all zero; they are
    /// divided by their sum.
    pub fn new(targets: [f64; LEVEL_COUNT]) -> Result<Self, SchedulerError> {
        if targets.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(SchedulerError::InvalidTargets(
                "targets must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = targets.iter().sum();
        if sum <= 0.0 {
            return Err(SchedulerError::InvalidTargets("targets sum to zero".into()));
        }
        Ok(SchedulerState {
            counts: [0; LEVEL_COUNT],
            targets: targets.map(|t| t / sum),
        })
    }

    pub fn counts(&self) -> [u64; LEVEL_COUNT] {
        self.counts
    }

    pub fn targets(&self) -> [f64; LEVEL_COUNT] {
        self.targets
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, level: Level) -> u64 {
        self.counts[level.index()]
    }

    pub fn observed(&self) -> [f64; LEVEL_COUNT] {
        let total = self.total();
        if total == 0 {
            return [0.0; LEVEL_COUNT];
        }
        self.counts.map(|c| c as f64 / total as f64)
    }

    pub fn deficits(&self) -> [f64; LEVEL_COUNT] {
        let observed = self.observed();
        std::array::from_fn(|i| self.targets[i] - observed[i])
    }

    pub fn deficit(&self, level: Level) -> f64 {
        self.deficits()[level.index()]
    }

    pub fn record_accept(&mut self, level: Level) {
        self.counts[level.index()] += 1;
    }

    pub fn reset(&mut self) {
        self.counts = [0; LEVEL_COUNT];
    }

    /// Picks the feasible level with the largest positive deficit, falling
    /// back to the least negative one. Ties go to the deeper level.
    pub fn select_level(&self, feasible: &BTreeSet<Level>) -> Result<Level, SchedulerError> {
        let deficits = self.deficits();
        let best = |positive_only: bool| {
            let mut best: Option<(Level, f64)> = None;
            for &level in feasible {
                let d = deficits[level.index()];
                if positive_only && d <= 0.0 {
                    continue;
                }
                // ascending iteration: `>=` hands ties to the higher level
                if best.is_none_or(|(_, b)| d >= b) {
                    best = Some((level, d));
                }
            }
            best.map(|(l, _)| l)
        };
        best(true)
            .or_else(|| best(false))
            .ok_or(SchedulerError::NoFeasibleLevel)
    }

    /// Level selection followed by category selection, dropping levels that
    /// no feasible category supports until an assignment is found.
    pub fn assign(
        &self,
        feasible_levels: &BTreeSet<Level>,
        feasible_categories: &BTreeSet<Category>,
        table: &CategoryTable,
    ) -> Result<(Level, Category), SchedulerError> {
        let mut levels = feasible_levels.clone();
        while !levels.is_empty() {
            let level = self.select_level(&levels)?;
            match select_category(level, feasible_categories, table) {
                Ok(category) => return Ok((level, category)),
                Err(SchedulerError::LevelUnsupported(_)) => {
                    levels.remove(&level);
                }
                Err(e) => return Err(e),
            }
        }
        Err(SchedulerError::NoCategory)
    }
}

/// Highest-priority feasible category whose range admits `level`.
pub fn select_category(
    level: Level,
    feasible: &BTreeSet<Category>,
    table: &CategoryTable,
) -> Result<Category, SchedulerError> {
    if feasible.is_empty() || !feasible.iter().any(|c| table.rows.contains_key(c)) {
        return Err(SchedulerError::NoCategory);
    }
    table
        .priority
        .iter()
        .copied()
        .find(|c| feasible.contains(c) && table.admits(*c, level))
        .ok_or(SchedulerError::LevelUnsupported(level))
}
