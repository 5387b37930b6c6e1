use std::path::Path;

use super::{CompletionSet, LmError};

/// Display text for a completion hidden by the blocklist.
pub const FILTERED_PLACEHOLDER: &str = "[response withheld by content filter]";

const DEFAULT_LIST: &str = include_str!("../../data/blocklist.txt");

/// Lowercase keywords matched at word boundaries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blocklist {
    keywords: Vec<String>,
}

impl Blocklist {
    pub fn new<I, S>(keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut keywords: Vec<String> = keywords
            .into_iter()
            .map(|k| k.as_ref().trim().to_lowercase())
            .filter(|k| !k.is_empty())
            .collect();
        keywords.sort();
        keywords.dedup();
        Self { keywords }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses one keyword per line. Blank lines and `#` comments are skipped.
    pub fn from_lines(text: &str) -> Self {
        Self::new(text.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LmError::Config(format!("reading blocklist {}: {e}", path.display())))?;
        Ok(Self::from_lines(&text))
    }

    /// The small list bundled with the crate. Deployments should supply their own.
    pub fn bundled() -> Self {
        Self::from_lines(DEFAULT_LIST)
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn matches(&self, text: &str) -> bool {
        if self.keywords.is_empty() {
            return false;
        }
        let lower = text.to_lowercase();
        self.keywords.iter().any(|k| contains_keyword(&lower, k))
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// True if `keyword` occurs in `text` with no word character on either side.
/// Both arguments are expected to be lowercase already.
pub fn contains_keyword(text: &str, keyword: &str) -> bool {
    if keyword.is_empty() {
        return false;
    }
    text.match_indices(keyword).any(|(at, _)| {
        let before = text[..at].chars().next_back();
        let after = text[at + keyword.len()..].chars().next();
        !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
    })
}

/// Marks completions that contain a blocked keyword and swaps their text for
/// [`FILTERED_PLACEHOLDER`].
pub fn apply_blocklist(mut set: CompletionSet, blocklist: &Blocklist) -> CompletionSet {
    for c in &mut set.completions {
        if !c.filtered && blocklist.matches(&c.text) {
            c.filtered = true;
            c.text = FILTERED_PLACEHOLDER.to_string();
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{Completion, FinishReason};

    fn set(texts: &[&str]) -> CompletionSet {
        CompletionSet {
            completions: texts
                .iter()
                .map(|t| Completion {
                    text: t.to_string(),
                    finish_reason: FinishReason::Length,
                    filtered: false,
                })
                .collect(),
            latency_ms: 0,
        }
    }

    #[test]
    fn case_insensitive_match() {
        let out = apply_blocklist(set(&["a BadWord here"]), &Blocklist::new(["badword"]));
        assert!(out.completions[0].filtered);
        assert_eq!(out.completions[0].text, FILTERED_PLACEHOLDER);
    }

    #[test]
    fn empty_list_is_identity() {
        let input = set(&["anything at all", "badword"]);
        assert_eq!(apply_blocklist(input.clone(), &Blocklist::empty()), input);
    }

    #[test]
    fn word_boundaries() {
        let list = Blocklist::new(["cat"]);
        assert!(!list.matches("concatenate"));
        assert!(!list.matches("cats"));
        assert!(list.matches("the cat."));
        assert!(list.matches("CAT"));
        assert!(list.matches("(cat)"));
        let multi = Blocklist::new(["bad word"]);
        assert!(multi.matches("a Bad Word!"));
        assert!(!multi.matches("a bad wordle"));
    }

    #[test]
    fn later_occurrence_counts() {
        assert!(contains_keyword("concat cat", "cat"));
    }

    #[test]
    fn parses_lines() {
        let list = Blocklist::from_lines("# header\nFoo\n\n  bar \nfoo\n");
        assert_eq!(list.keywords(), ["bar", "foo"]);
        assert!(!Blocklist::bundled().is_empty());
    }
}
