use std::collections::{BTreeSet, HashSet};

use crate::corpus::ImageRecord;
use crate::scheduler::{Category, CategoryTable, Level};
use crate::text::fold;

use super::GenerationError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextConfig {
    pub separator: String,
    /// Character budget for the merged context.
    pub max_chars: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            separator: " ⏐ ".to_string(),
            max_chars: 4000,
        }
    }
}

fn render_conversation(question: &str, answer: &str) -> String {
    let mut s = format!("{} {}", question.trim(), answer.trim());
    if !s.ends_with(['.', '!', '?']) {
        s.push('.');
    }
    s
}

/// Merges captions (in stored order) and conversation snippets into one
/// context string. Segments are dropped whole from the end once the
/// character budget is exceeded; the first caption is always kept.
pub fn build_context(record: &ImageRecord, config: &ContextConfig) -> Result<String, GenerationError> {
    if record.captions.is_empty() {
        return Err(GenerationError::MissingCaptions(record.image_id.clone()));
    }
    let segments = record
        .captions
        .iter()
        .map(|c| c.trim().to_string())
        .chain(
            record
                .conversations
                .iter()
                .map(|c| render_conversation(&c.question, &c.answer)),
        );
    let sep_len = config.separator.chars().count();
    let mut out = String::new();
    let mut used = 0usize;
    for (i, segment) in segments.enumerate() {
        let len = segment.chars().count() + if i == 0 { 0 } else { sep_len };
        if i > 0 && used + len > config.max_chars {
            break;
        }
        if i > 0 {
            out.push_str(&config.separator);
        }
        out.push_str(&segment);
        used += len;
    }
    Ok(out)
}

const NUMERAL_CUES: &[&str] = &[
    "một", "hai", "ba", "bốn", "năm", "sáu", "bảy", "tám", "chín", "mười", "nhiều", "những",
    "các", "vài", "mấy", "đôi", "cặp", "nhóm", "đàn", "bầy", "one", "two", "three", "four",
    "five", "six", "seven", "eight", "nine", "ten", "several", "many", "few", "pair", "group",
    "couple",
];

const SPATIAL_CUES: &[&str] = &[
    "trên", "dưới", "cạnh", "bên", "sau", "trước", "trong", "ngoài", "giữa", "gần", "xa",
    "phía", "quanh", "on", "under", "below", "above", "near", "behind", "beside", "between",
    "inside", "next", "front", "left", "right", "shoreline",
];

const TEXT_CUES: &[&str] = &[
    "chữ", "biển hiệu", "bảng hiệu", "dòng chữ", "văn bản", "nhãn", "logo", "khẩu hiệu",
    "tấm biển", "số hiệu", "sign", "text", "label", "written", "reads", "banner", "poster",
];

const ACTION_CUES: &[&str] = &[
    "đang", "chơi", "ăn", "chạy", "đi", "cầm", "ngồi", "đứng", "bay", "bơi", "chèo", "lái",
    "nhảy", "uống", "nấu", "đọc", "với", "kéo", "ném", "bắt", "enjoying", "reaching",
    "feeding", "playing", "eating", "riding", "holding", "sitting", "standing", "walking",
    "running",
];

const COMPARATIVE_CUES: &[&str] = &[
    "hơn", "nhất", "lớn", "nhỏ", "cao", "thấp", "than", "bigger", "smaller", "larger", "closer",
];

struct Cues {
    tokens: HashSet<String>,
    padded: String,
}

impl Cues {
    fn new(text: &str) -> Self {
        let folded = fold(text);
        let tokens = folded
            .split_whitespace()
            .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_string())
            .filter(|t| !t.is_empty())
            .collect::<HashSet<_>>();
        let mut padded = String::with_capacity(folded.len() + 2);
        padded.push(' ');
        for token in folded.split_whitespace() {
            padded.push_str(token.trim_matches(|c: char| !c.is_alphanumeric()));
            padded.push(' ');
        }
        Cues { tokens, padded }
    }

    fn any(&self, list: &[&str]) -> bool {
        list.iter().any(|cue| {
            if cue.contains(' ') {
                self.padded.contains(&format!(" {cue} "))
            } else {
                self.tokens.contains(*cue)
            }
        })
    }

    fn has_digit(&self) -> bool {
        self.tokens.iter().any(|t| t.chars().any(|c| c.is_ascii_digit()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feasibility {
    pub levels: BTreeSet<Level>,
    pub categories: BTreeSet<Category>,
}

/// Rule-based cue detection over the merged context.
pub fn feasibility(
    record: &ImageRecord,
    config: &ContextConfig,
    table: &CategoryTable,
) -> Result<Feasibility, GenerationError> {
    let context = build_context(record, config)?;
    let cues = Cues::new(&context);

    let counting = cues.has_digit() || cues.any(NUMERAL_CUES);
    let spatial = cues.any(SPATIAL_CUES);
    let action = cues.any(ACTION_CUES);
    let text_in_image = record.has_text || cues.any(TEXT_CUES);
    let rich = record.captions.len() >= 2 || !record.conversations.is_empty();
    let comparison = counting || cues.any(COMPARATIVE_CUES) || record.primary_objects.len() >= 2;
    let relationship = spatial || action;

    let mut categories = BTreeSet::from([Category::ObjectAttribute, Category::YesNo]);
    for (flag, category) in [
        (counting, Category::Counting),
        (spatial, Category::LocationSpatial),
        (action, Category::Action),
        (comparison, Category::Comparison),
        (relationship, Category::Relationship),
        (rich, Category::Causal),
        (rich, Category::ContextualInference),
    ] {
        if flag {
            categories.insert(category);
        }
    }

    let mut levels = table.levels_for(&categories);
    if !text_in_image {
        levels.remove(&Level::MAX);
    }
    Ok(Feasibility { levels, categories })
}
