//! Offline transports. Every mock reply is a pure function of the mock's
//! seed and the prompt, so pipeline runs against mocks are reproducible.

use std::fmt::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{ModelEndpoint, PromptSpec, Transport, TransportError};
use crate::generation::prompt::{CONTEXT_CLOSE, CONTEXT_OPEN};

fn rng_for(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Value of the first `"{key}: value"` line in the user message.
pub fn prompt_field<'a>(prompt: &'a PromptSpec, key: &str) -> Option<&'a str> {
    prompt
        .user
        .lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix(':'))
        .map(str::trim)
}

/// Criterion ids listed in a judge prompt, in order.
pub fn prompt_criteria(prompt: &PromptSpec) -> Vec<&str> {
    prompt
        .user
        .lines()
        .skip_while(|l| *l != "Criteria:")
        .skip(1)
        .map_while(|l| l.strip_prefix("- "))
        .filter_map(|l| l.split_whitespace().next())
        .collect()
}

/// Generator producing contract-conforming question/answer blocks built
/// from the caption context in the prompt.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    seed: u64,
    /// Fraction of replies deliberately violating the output contract.
    malformed_rate: f64,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        MockGenerator {
            seed,
            malformed_rate: 0.0,
        }
    }

    pub fn with_malformed_rate(mut self, rate: f64) -> Self {
        self.malformed_rate = rate.clamp(0.0, 1.0);
        self
    }

    fn context_words(prompt: &PromptSpec) -> Vec<String> {
        let user = &prompt.user;
        let body = match (user.find(CONTEXT_OPEN), user.find(CONTEXT_CLOSE)) {
            (Some(a), Some(b)) if a < b => &user[a + CONTEXT_OPEN.len()..b],
            _ => "",
        };
        let words: Vec<String> = body
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|w| w.chars().count() >= 2)
            .collect();
        if words.is_empty() {
            vec!["vật".to_string(), "ảnh".to_string()]
        } else {
            words
        }
    }

    pub fn reply(&self, prompt: &PromptSpec) -> String {
        let mut rng = rng_for(self.seed, &[&prompt.system, &prompt.user]);
        let words = Self::context_words(prompt);
        let category = prompt_field(prompt, "Question category").unwrap_or("");
        let pivot_len = rng.random_range(1..=2usize).min(words.len());
        let start = rng.random_range(0..=words.len() - pivot_len);
        let pivot = words[start..start + pivot_len].join(" ");
        let tail = *[
            "",
            " trong ảnh",
            " trong bức ảnh này",
            " ở đây",
            " mà ta thấy",
            " lúc này",
        ]
        .choose(&mut rng)
        .unwrap();
        let mut question = match category {
            "Object / Attribute Identification" => format!("{pivot}{tail} có màu gì?"),
            "Location / Spatial Description" => format!("{pivot} nằm ở đâu{tail}?"),
            "Action Description" => format!("Người{tail} đang làm gì với {pivot}?"),
            "Counting" => format!("Có bao nhiêu {pivot}{tail}?"),
            "Comparisons" => format!("{pivot} nào lớn hơn{tail}?"),
            "Relationships" => format!("{pivot} liên quan thế nào tới vật bên cạnh{tail}?"),
            "Causal Reasoning" => format!("Vì sao {pivot} lại xuất hiện{tail}?"),
            "Contextual Inference" => format!("Khung cảnh có {pivot}{tail} gợi ý điều gì?"),
            _ => format!("Có {pivot}{tail} không?"),
        };
        let mut answers: Vec<String> = (0..5)
            .map(|_| {
                let n = rng.random_range(1..=4usize);
                (0..n)
                    .map(|_| words.choose(&mut rng).unwrap().as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();

        if rng.random_bool(self.malformed_rate) {
            match rng.random_range(0..3) {
                0 => {
                    answers.pop();
                }
                1 => answers[0] = ["dài"; 11].join(" "),
                _ => {
                    question.pop();
                }
            }
        }

        let mut out = String::from("Đây là kết quả:\n```qa\n");
        let _ = writeln!(out, "Q: {question}");
        for (i, a) in answers.iter().enumerate() {
            let _ = writeln!(out, "A{}: {a}", i + 1);
        }
        out.push_str("```\n");
        out
    }
}

impl Transport for MockGenerator {
    fn send(&self, _endpoint: &ModelEndpoint, prompt: &PromptSpec) -> Result<String, TransportError> {
        Ok(self.reply(prompt))
    }
}

/// Judge whose scores mix a sample-level quality signal (shared by all mock
/// judges, derived from the question and answers) with judge-specific noise
/// derived from the seed.
#[derive(Debug, Clone)]
pub struct MockJudge {
    seed: u64,
    scale: f64,
}

impl MockJudge {
    pub fn new(seed: u64) -> Self {
        MockJudge { seed, scale: 1.0 }
    }

    /// Reply on a `0..=scale` scale (the endpoint must declare the same scale).
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn reply(&self, prompt: &PromptSpec) -> String {
        let content: String = prompt
            .user
            .lines()
            .skip_while(|l| !l.starts_with("Question:"))
            .take_while(|l| *l != "Criteria:")
            .collect();
        let mut out = String::new();
        for id in prompt_criteria(prompt) {
            let shared = rng_for(0, &[&content, id]).random::<f64>();
            let noise = rng_for(self.seed, &[&prompt.system, &prompt.user, id]).random::<f64>();
            let score = 0.7 * shared + 0.3 * noise;
            let _ = writeln!(out, "{id}: {:.4}", score * self.scale);
        }
        out
    }
}

impl Transport for MockJudge {
    fn send(&self, _endpoint: &ModelEndpoint, prompt: &PromptSpec) -> Result<String, TransportError> {
        Ok(self.reply(prompt))
    }
}

type Script = dyn Fn(&ModelEndpoint, &PromptSpec) -> Result<String, TransportError> + Send + Sync;

/// Transport backed by a closure, for fixtures and failure injection.
pub struct ScriptedTransport {
    script: Box<Script>,
    calls: AtomicUsize,
}

impl ScriptedTransport {
    pub fn new(
        script: impl Fn(&ModelEndpoint, &PromptSpec) -> Result<String, TransportError> + Send + Sync + 'static,
    ) -> Self {
        ScriptedTransport {
            script: Box::new(script),
            calls: AtomicUsize::new(0),
        }
    }

    /// Judge replying with the same normalized score table for every sample.
    pub fn fixed_scores(scores: Vec<f64>) -> Self {
        ScriptedTransport::new(move |_, prompt| {
            let mut out = String::new();
            for (id, s) in prompt_criteria(prompt).into_iter().zip(&scores) {
                let _ = writeln!(out, "{id}: {s}");
            }
            Ok(out)
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, endpoint: &ModelEndpoint, prompt: &PromptSpec) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(endpoint, prompt)
    }
}
