//! Prompt style taxonomy for QA and crossword prompts. Categories overlap,
//! so the first match in [`PromptCategory::PRECEDENCE`] wins.

use interlace_core::TaskKind;
use serde::{Deserialize, Serialize};

use crate::text::normalized_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptCategory {
    Exact,
    Close,
    Question,
    Choices,
    Completion,
    Command,
    Meaning,
    Lexical,
    Keyword,
    Others,
}

impl PromptCategory {
    pub const PRECEDENCE: [PromptCategory; 10] = [
        PromptCategory::Exact,
        PromptCategory::Close,
        PromptCategory::Question,
        PromptCategory::Choices,
        PromptCategory::Completion,
        PromptCategory::Command,
        PromptCategory::Meaning,
        PromptCategory::Lexical,
        PromptCategory::Keyword,
        PromptCategory::Others,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptCategory::Exact => "exact",
            PromptCategory::Close => "close",
            PromptCategory::Question => "question",
            PromptCategory::Choices => "choices",
            PromptCategory::Completion => "completion",
            PromptCategory::Command => "command",
            PromptCategory::Meaning => "meaning",
            PromptCategory::Lexical => "lexical",
            PromptCategory::Keyword => "keyword",
            PromptCategory::Others => "others",
        }
    }
}

const QUESTION_WORDS: &[&str] = &[
    "who", "what", "where", "how", "which", "why", "when", "whose", "do", "does", "did", "can", "could", "has",
    "have", "is", "was", "are", "were", "should",
];

const COMPLETION_WORDS: &[&str] = &["is", "was", "by", "may", "cause", "are", "of", "about", "the", "to", "their"];

const COMMAND_WORDS: &[&str] = &[
    "list", "finish", "complete", "give", "tell", "write", "name", "explain", "describe", "find", "generate",
    "translate", "summarize", "provide", "show", "suggest", "continue",
];

const MEANING_PHRASES: &[&str] = &[
    "synonym", "synonyms", "antonym", "meaning", "means", "definition", "define", "defined", "word for", "words for",
    "another word", "another name", "thesaurus", "similar to",
];

const LEXICAL_PHRASES: &[&str] = &[
    "letter word", "letters", "letter", "begins with", "beginning with", "starts with", "starting with", "ends with",
    "ending with", "rhymes with", "anagram", "spelled", "spelling",
];

const KEYWORD_LIMIT: usize = 5;

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// True if `phrase` occurs in `toks` as a run of whole tokens.
fn has_phrase(toks: &[String], phrase: &str) -> bool {
    let p: Vec<&str> = phrase.split(' ').collect();
    toks.windows(p.len()).any(|w| w.iter().zip(&p).all(|(a, b)| a == b))
}

/// Crossword length hints such as "5 letters" or "(4)".
fn has_length_hint(text: &str) -> bool {
    let t = text.trim();
    if let Some(inner) = t.rsplit_once('(').and_then(|(_, rest)| rest.strip_suffix(')')) {
        if !inner.is_empty() && inner.chars().all(|c| c.is_ascii_digit() || c == ',') {
            return true;
        }
    }
    t.split_whitespace().any(|w| w.contains('_') && w.chars().all(|c| c == '_' || c.is_alphabetic()))
}

/// Everything the classifier needs to know about the unit being worked on.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    /// The question or clue text; empty if unknown.
    pub question_text: &'a str,
    pub choices: &'a [String],
    pub task: TaskKind,
}

pub fn classify_prompt(input: &str, question_text: &str, choices: &[String], task: TaskKind) -> PromptCategory {
    classify(input, &PromptContext { question_text, choices, task })
}

pub fn classify(input: &str, ctx: &PromptContext<'_>) -> PromptCategory {
    let toks = tokens(input);
    let trimmed = input.trim();
    let sim = if ctx.question_text.trim().is_empty() {
        None
    } else {
        Some(normalized_similarity(&trimmed.to_lowercase(), &ctx.question_text.trim().to_lowercase()))
    };

    if sim == Some(100.0) {
        return PromptCategory::Exact;
    }
    if sim.is_some_and(|s| s > 70.0 && s < 100.0) {
        return PromptCategory::Close;
    }
    if trimmed.ends_with('?') || toks.first().is_some_and(|t| QUESTION_WORDS.contains(&t.as_str())) {
        return PromptCategory::Question;
    }
    if ctx.choices.iter().any(|c| {
        let ct = tokens(c);
        !ct.is_empty() && has_phrase(&toks, &ct.join(" "))
    }) {
        return PromptCategory::Choices;
    }
    if toks.last().is_some_and(|t| COMPLETION_WORDS.contains(&t.as_str())) {
        return PromptCategory::Completion;
    }
    if toks.first().is_some_and(|t| COMMAND_WORDS.contains(&t.as_str())) || has_phrase(&toks, "finish the sentence")
    {
        return PromptCategory::Command;
    }
    if MEANING_PHRASES.iter().any(|p| has_phrase(&toks, p)) {
        return PromptCategory::Meaning;
    }
    if ctx.task == TaskKind::Crossword && (LEXICAL_PHRASES.iter().any(|p| has_phrase(&toks, p)) || has_length_hint(input))
    {
        return PromptCategory::Lexical;
    }
    if !toks.is_empty() && toks.len() < KEYWORD_LIMIT {
        return PromptCategory::Keyword;
    }
    PromptCategory::Others
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let q = "What is another name for the camelopard?";
        assert_eq!(classify_prompt(q, q, &[], TaskKind::Qa), PromptCategory::Exact);
        assert_eq!(classify_prompt("japanese car", "", &[], TaskKind::Qa), PromptCategory::Keyword);
        assert_eq!(classify_prompt("5 letter word for sea", "", &[], TaskKind::Crossword), PromptCategory::Meaning);
        assert_eq!(classify_prompt("five letters, starts with s", "", &[], TaskKind::Crossword), PromptCategory::Lexical);
        assert_eq!(classify_prompt("five letters, starts with s", "", &[], TaskKind::Qa), PromptCategory::Others);
        assert_eq!(classify_prompt("", "", &[], TaskKind::Qa), PromptCategory::Others);
    }
}
