//! The line-delimited output contract:
//!
//! ````text
//! ```qa
//! Q: <question>
//! A1: <answer>
//! ...
//! A5: <answer>
//! ```
//! ````
//!
//! Text outside the first fenced block is ignored, which tolerates chat
//! preambles. Without a fence the whole reply is scanned.

use super::sample::{check_text, SampleError};
use super::Constraints;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedOutput {
    pub question: String,
    pub answers: Vec<String>,
}

fn fenced_body(raw: &str) -> &str {
    let Some(start) = raw.find("```") else {
        return raw;
    };
    let after = &raw[start + 3..];
    // skip the info string (e.g. "qa") on the opening fence line
    let body = after.find('\n').map_or("", |i| &after[i + 1..]);
    match body.find("```") {
        Some(end) => &body[..end],
        None => body,
    }
}

fn answer_line(line: &str) -> Option<&str> {
    let rest = line.strip_prefix('A').or_else(|| line.strip_prefix('a'))?;
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    rest[digits..].strip_prefix(':').map(str::trim)
}

pub fn parse_output(raw: &str, constraints: &Constraints) -> Result<ParsedOutput, SampleError> {
    if raw.trim().is_empty() {
        return Err(SampleError::EmptyOutput);
    }
    let mut question: Option<String> = None;
    let mut answers = Vec::new();
    for line in fenced_body(raw).lines().map(str::trim) {
        if let Some(q) = line.strip_prefix("Q:").or_else(|| line.strip_prefix("q:")) {
            if question.is_some() {
                return Err(SampleError::MultipleQuestions);
            }
            question = Some(q.trim().to_string());
        } else if let Some(a) = answer_line(line) {
            answers.push(a.to_string());
        }
    }
    let question = question.unwrap_or_default();
    check_text(&question, &answers, constraints)?;
    Ok(ParsedOutput { question, answers })
}

pub fn render(question: &str, answers: &[String]) -> String {
    let mut out = String::from("```qa\n");
    out.push_str("Q: ");
    out.push_str(question);
    out.push('\n');
    for (i, a) in answers.iter().enumerate() {
        out.push_str(&format!("A{}: {a}\n", i + 1));
    }
    out.push_str("```");
    out
}
