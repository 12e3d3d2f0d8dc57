use std::fmt::Write;

use crate::gateway::PromptSpec;

use super::GenerationRequest;

/// Markers that delimit the caption context inside the prompt.
pub const CONTEXT_OPEN: &str = "<<<";
pub const CONTEXT_CLOSE: &str = ">>>";

fn language_name(tag: &str) -> &str {
    match tag.split('-').next().unwrap_or(tag) {
        "vi" => "Vietnamese",
        "en" => "English",
        _ => tag,
    }
}

pub fn build_prompt(req: &GenerationRequest) -> PromptSpec {
    let lang = language_name(&req.language);
    let (level_name, level_definition) = req.level.describe();
    let c = &req.constraints;

    let system = format!(
        "You create visual question answering data in {lang}. \
         You only use information given in the image description. \
         Follow the output format exactly."
    );

    let mut user = String::new();
    let _ = writeln!(user, "Request: {}", req.request_id);
    let _ = writeln!(user, "Image: {}", req.image_id);
    let _ = writeln!(user, "Language: {}", req.language);
    let _ = writeln!(user);
    let _ = writeln!(user, "Image description (merged captions and notes):");
    let _ = writeln!(user, "{CONTEXT_OPEN}");
    let _ = writeln!(user, "{}", req.context);
    let _ = writeln!(user, "{CONTEXT_CLOSE}");
    let _ = writeln!(user);
    let _ = writeln!(
        user,
        "Reasoning level {} ({level_name}): {level_definition}",
        req.level
    );
    let _ = writeln!(user, "Question category: {}", req.category.display_name());
    let _ = writeln!(user);
    let _ = writeln!(user, "Requirements:");
    let _ = writeln!(
        user,
        "1. Write the question and every answer in natural {lang} syntax."
    );
    let _ = writeln!(
        user,
        "2. Keep the question strictly grounded in the description above; do not add any detail the description does not support."
    );
    let _ = writeln!(
        user,
        "3. Every answer must be logically consistent with what the question asks for, such as a color, a number, a spatial relation or a causal explanation."
    );
    let _ = writeln!(
        user,
        "4. The question must require reasoning at the level stated above and belong to the stated category."
    );
    let _ = writeln!(user);
    let _ = writeln!(
        user,
        "Output: exactly one question ending with '?' and exactly {} short answers, each between {} and {} words, as independent annotators would give them. Reply with only this block:",
        c.answer_count, c.answer_min_words, c.answer_max_words
    );
    let _ = writeln!(user, "```qa");
    let _ = writeln!(user, "Q: <question>");
    for i in 1..=c.answer_count {
        let _ = writeln!(user, "A{i}: <answer>");
    }
    let _ = write!(user, "```");

    PromptSpec {
        system,
        user,
        image_uri: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::Constraints;
    use crate::scheduler::{Category, Level};

    fn request(level: u8) -> GenerationRequest {
        GenerationRequest {
            request_id: "q000001".into(),
            image_id: "img1".into(),
            context: "hai chiếc thuyền kayak".into(),
            level: Level::new(level).unwrap(),
            category: Category::YesNo,
            language: "vi".into(),
            constraints: Constraints::default(),
        }
    }

    #[test]
    fn prompt_embeds_level_definitions() {
        assert!(build_prompt(&request(1))
            .user
            .contains("Identifying objects or basic attributes"));
        assert!(build_prompt(&request(4))
            .user
            .contains("Inferring intentions, mental states, or causal relationships"));
    }

    #[test]
    fn prompt_embeds_constraints_and_contract() {
        let p = build_prompt(&request(2));
        assert!(p.user.contains("natural Vietnamese syntax"));
        assert!(p.user.contains("strictly grounded"));
        assert!(p.user.contains("logically consistent"));
        assert!(p.user.contains("Yes/No Question"));
        assert!(p.user.contains("between 1 and 10 words"));
        assert!(p.user.contains("A5: <answer>"));
        assert!(p.user.contains("<<<\nhai chiếc thuyền kayak\n>>>"));
    }

    #[test]
    fn prompt_is_deterministic() {
        assert_eq!(build_prompt(&request(3)), build_prompt(&request(3)));
    }
}
