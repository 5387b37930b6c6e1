//! Text distances and the extractive density score.

/// Whitespace tokens, as typed.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Lowercased tokens with punctuation removed. Tokens that were pure
/// punctuation disappear.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Levenshtein distance over arbitrary sequences with unit costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word-level edit distance between two texts.
pub fn word_edit_distance(a: &str, b: &str) -> usize {
    levenshtein(&words(a), &words(b))
}

pub fn char_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein(&a, &b)
}

/// Character similarity on a 0 to 100 scale; two empty strings score 100.
pub fn normalized_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 100.0;
    }
    100.0 * (1.0 - char_levenshtein(a, b) as f64 / longest as f64)
}

/// Greedy extractive fragments: at each summary position take the longest
/// span that also occurs in the document, then jump past it. Returns the
/// fragment lengths.
pub fn extractive_fragments(summary: &[String], document: &[String]) -> Vec<usize> {
    let mut fragments = Vec::new();
    let mut i = 0;
    while i < summary.len() {
        let mut best = 0;
        let mut j = 0;
        while j < document.len() {
            if summary[i] == document[j] {
                let (mut a, mut b) = (i, j);
                while a < summary.len() && b < document.len() && summary[a] == document[b] {
                    a += 1;
                    b += 1;
                }
                best = best.max(a - i);
                j = b;
            } else {
                j += 1;
            }
        }
        if best > 0 {
            fragments.push(best);
        }
        i += best.max(1);
    }
    fragments
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub value: f64,
    /// The summary had no tokens, so `value` is 0 by convention.
    pub empty_summary: bool,
}

/// Mean over summary tokens of the length of the fragment each token falls
/// in: the sum of squared fragment lengths over the summary length.
pub fn density(summary: &str, document: &str) -> Density {
    let s = normalized_tokens(summary);
    if s.is_empty() {
        return Density { value: 0.0, empty_summary: true };
    }
    let d = normalized_tokens(document);
    let sq: usize = extractive_fragments(&s, &d).iter().map(|f| f * f).sum();
    Density { value: sq as f64 / s.len() as f64, empty_summary: false }
}
