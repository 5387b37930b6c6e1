//! Deterministic stand-in for a hosted completion model.
//!
//! Output is a pure function of the prompt text, decoding parameters, seed
//! and style. Prompts matching a fixture pattern get the fixture response;
//! anything else gets filler assembled from a small vocabulary and spans
//! copied out of the tail of the prompt.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendReply, DecodingParams, FinishReason, LmBackend, LmError, Prompt, RawCompletion};

const BUNDLED_FIXTURES: &str = include_str!("../../data/mock_fixtures.json");

const VOCAB: &[&str] = &[
    "about", "after", "again", "always", "answer", "around", "because", "before", "better",
    "city", "could", "day", "early", "every", "family", "feel", "first", "friend", "good",
    "great", "group", "help", "home", "idea", "important", "just", "know", "large", "later",
    "little", "local", "long", "make", "many", "maybe", "might", "more", "most", "never", "new",
    "night", "often", "old", "people", "place", "plan", "really", "right", "said", "school",
    "small", "something", "still", "story", "sure", "think", "time", "today", "together",
    "very", "water", "week", "well", "world", "year", "young",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockStyle {
    /// Chance that each filler chunk is a span copied from the prompt tail.
    pub copy_rate: f64,
    /// Chance that a prompt matching a fixture gets the fixture response.
    pub fixture_rate: f64,
    pub min_words: u32,
    pub max_words: u32,
    /// Chance of running on past the first stop sequence.
    pub ramble_rate: f64,
    /// Chance that a request fails outright.
    pub failure_rate: f64,
    pub base_latency_ms: u64,
}

impl Default for MockStyle {
    fn default() -> Self {
        Self {
            copy_rate: 0.5,
            fixture_rate: 1.0,
            min_words: 6,
            max_words: 16,
            ramble_rate: 0.3,
            failure_rate: 0.0,
            base_latency_ms: 120,
        }
    }
}

impl MockStyle {
    /// Named presets used by the simulator. Unknown names get the default.
    pub fn preset(model_id: &str) -> Self {
        let base = Self::default();
        match model_id {
            "mock-alpha" => Self { copy_rate: 0.85, fixture_rate: 0.9, min_words: 8, max_words: 20, ..base },
            "mock-beta" => Self { copy_rate: 0.2, fixture_rate: 0.55, min_words: 5, max_words: 12, ..base },
            "mock-gamma" => Self { copy_rate: 0.5, fixture_rate: 0.75, base_latency_ms: 300, ..base },
            "mock-delta" => Self {
                copy_rate: 0.35,
                fixture_rate: 0.4,
                max_words: 24,
                failure_rate: 0.02,
                base_latency_ms: 60,
                ..base
            },
            _ => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub pattern: String,
    pub responses: Vec<String>,
}

/// Prompt patterns (case-insensitive substrings) mapped to canned responses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureTable {
    pub entries: Vec<FixtureEntry>,
}

impl FixtureTable {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_FIXTURES).expect("bundled mock fixtures are valid JSON")
    }

    /// The first entry whose pattern occurs in `prompt`.
    pub fn lookup(&self, prompt: &str) -> Option<&FixtureEntry> {
        let lower = prompt.to_lowercase();
        self.entries
            .iter()
            .find(|e| !e.responses.is_empty() && lower.contains(&e.pattern.to_lowercase()))
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    model_id: String,
    seed: u64,
    style: MockStyle,
    fixtures: Arc<FixtureTable>,
}

impl MockBackend {
    pub fn new(model_id: impl Into<String>, seed: u64, style: MockStyle, fixtures: Arc<FixtureTable>) -> Self {
        Self { model_id: model_id.into(), seed, style, fixtures }
    }

    /// A mock whose seed and style are derived from its id.
    pub fn for_model(model_id: &str) -> Self {
        Self::new(model_id, seed_for_model(model_id), MockStyle::preset(model_id), Arc::new(FixtureTable::bundled()))
    }

    pub fn style(&self) -> &MockStyle {
        &self.style
    }
}

impl LmBackend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &Prompt, params: &DecodingParams) -> Result<BackendReply, LmError> {
        // Keyed on the request id too, so a retried action can succeed.
        let keyed = format!("{}\n{}", prompt.request_id, prompt.text);
        let mut gate = rng_for(self.seed, params, &keyed, u32::MAX);
        if self.style.failure_rate > 0.0 && gate.random_bool(self.style.failure_rate.min(1.0)) {
            return Err(LmError::BackendFailure("mock backend injected failure".into()));
        }
        Ok(mock_complete(prompt, params, self.seed, &self.fixtures, &self.style))
    }
}

/// Seed derived from the leading bytes of the SHA-256 of `model_id`.
pub fn seed_for_model(model_id: &str) -> u64 {
    let digest = Sha256::digest(model_id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn rng_for(seed: u64, params: &DecodingParams, prompt: &str, index: u32) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(serde_json::to_vec(params).expect("params serialize"));
    h.update((prompt.len() as u64).to_le_bytes());
    h.update(prompt.as_bytes());
    h.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// The last block of the prompt with tags and `Label:` tokens removed.
fn prompt_tail(prompt: &str) -> Vec<&str> {
    let block = prompt
        .split("\n\n")
        .flat_map(|b| b.split("***"))
        .filter(|b| !b.trim().is_empty())
        .last()
        .unwrap_or("");
    block
        .lines()
        .map(strip_label)
        .flat_map(|line| line.split(|c: char| c.is_whitespace() || c == '<' || c == '>'))
        .filter(|w| !w.is_empty() && !w.ends_with(':') && !w.starts_with('/'))
        .filter(|w| !matches!(*w, "user" | "bot" | "conversation"))
        .collect()
}

/// Drops a leading `Label:` or `Two Words:` from a line.
fn strip_label(line: &str) -> &str {
    match line.split_once(':') {
        Some((head, rest))
            if !head.is_empty()
                && head.split_whitespace().count() <= 2
                && head.split_whitespace().all(|w| w.starts_with(|c: char| c.is_ascii_uppercase())) =>
        {
            rest
        }
        _ => line,
    }
}

fn filler(rng: &mut ChaCha8Rng, source: &[&str], style: &MockStyle, len: usize) -> Vec<String> {
    let mut words: Vec<String> = Vec::with_capacity(len);
    while words.len() < len {
        if !source.is_empty() && rng.random_bool(style.copy_rate.clamp(0.0, 1.0)) {
            let span = rng.random_range(2..=6usize);
            let start = rng.random_range(0..source.len());
            for w in source[start..].iter().take(span) {
                if words.len() == len {
                    break;
                }
                words.push(w.trim_end_matches(['.', ',', '?', '!', ';']).to_string());
            }
        } else {
            words.push(VOCAB.choose(rng).expect("non-empty vocabulary").to_string());
        }
    }
    words
}

fn sentence(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s.push('.');
    s
}

fn one_completion(
    prompt: &str,
    params: &DecodingParams,
    seed: u64,
    fixtures: &FixtureTable,
    style: &MockStyle,
    index: u32,
) -> (RawCompletion, usize) {
    let mut rng = rng_for(seed, params, prompt, index);
    let use_fixture = rng.random_bool(style.fixture_rate.clamp(0.0, 1.0));
    let body = match fixtures.lookup(prompt) {
        Some(entry) if use_fixture => entry.responses[index as usize % entry.responses.len()].clone(),
        _ => {
            let source = prompt_tail(prompt);
            let lo = style.min_words.max(1) as usize;
            let hi = (style.max_words as usize).max(lo);
            let n = rng.random_range(lo..=hi);
            let mut text = sentence(&filler(&mut rng, &source, style, n));
            if rng.random_bool(0.5) {
                let m = rng.random_range(lo..=hi);
                text.push(' ');
                text.push_str(&sentence(&filler(&mut rng, &source, style, m)));
            }
            text
        }
    };

    let limit = params.max_tokens as usize;
    let words: Vec<&str> = body.split_whitespace().collect();
    let word_count = words.len().min(limit);
    if words.len() > limit {
        let text = words[..limit].join(" ");
        return (RawCompletion { text, finish_reason: FinishReason::Length }, word_count);
    }
    let mut text = body;
    let mut finish_reason = FinishReason::Backend;
    if let Some(stop) = params.stop_sequences.first() {
        if rng.random_bool(style.ramble_rate.clamp(0.0, 1.0)) {
            let extra = filler(&mut rng, &[], style, 3);
            text = format!("{text}\n{stop} {}", extra.join(" "));
            finish_reason = FinishReason::Length;
        }
    }
    (RawCompletion { text, finish_reason }, word_count)
}

/// Generates `params.num_completions` completions for `prompt`.
pub fn mock_complete(
    prompt: &Prompt,
    params: &DecodingParams,
    seed: u64,
    fixtures: &FixtureTable,
    style: &MockStyle,
) -> BackendReply {
    let mut latency_ms = style.base_latency_ms;
    let completions = (0..params.num_completions)
        .map(|i| {
            let (c, words) = one_completion(&prompt.text, params, seed, fixtures, style, i);
            latency_ms += 3 * words as u64;
            c
        })
        .collect();
    let mut rng = rng_for(seed, params, &prompt.text, u32::MAX - 1);
    latency_ms += rng.random_range(0..=style.base_latency_ms);
    BackendReply { completions, latency_ms }
}
