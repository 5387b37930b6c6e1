use interlace_analysis::text::{char_levenshtein, density, extractive_fragments, normalized_tokens, word_edit_distance};
use interlace_analysis::normalized_similarity;
use proptest::prelude::*;
use serde::Deserialize;

/// Plain recursion over suffixes, memoized on (i, j).
fn recursive_distance(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut [[Option<usize>; 7]; 7]) -> usize {
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if i == a.len() {
            b.len() - j
        } else if j == b.len() {
            a.len() - i
        } else if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo).min(go(a, b, i, j + 1, memo)).min(go(a, b, i + 1, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    go(a, b, 0, 0, &mut [[None; 7]; 7])
}

fn all_sequences(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for t in 0..3u8 {
                let mut s2 = s.clone();
                s2.push(t);
                next.push(s2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn render(seq: &[u8]) -> String {
    seq.iter().map(|t| ["x", "y", "z"][*t as usize]).collect::<Vec<_>>().join(" ")
}

#[test]
fn word_edit_distance_matches_recursive_oracle_exhaustively() {
    let seqs = all_sequences(6);
    assert_eq!(seqs.len(), 1093);
    let texts: Vec<String> = seqs.iter().map(|s| render(s)).collect();
    for (a, ta) in seqs.iter().zip(&texts) {
        for (b, tb) in seqs.iter().zip(&texts) {
            assert_eq!(word_edit_distance(ta, tb), recursive_distance(a, b), "{ta:?} vs {tb:?}");
        }
    }
}

#[test]
fn similarity_matches_char_oracle() {
    assert_eq!(normalized_similarity("abcd", "abce"), 75.0);
    assert_eq!(char_levenshtein("kitten", "sitting"), 3);
    assert!((normalized_similarity("kitten", "sitting") - 100.0 * (1.0 - 3.0 / 7.0)).abs() < 1e-12);
    assert_eq!(normalized_similarity("same", "same"), 100.0);
    assert_eq!(normalized_similarity("abc", "xyz"), 0.0);
}

#[derive(Deserialize)]
struct DensityCase {
    summary: String,
    document: String,
    numerator: u32,
    denominator: u32,
    kind: String,
}

fn density_cases() -> Vec<DensityCase> {
    #[derive(Deserialize)]
    struct File {
        cases: Vec<DensityCase>,
    }
    let f: File = serde_json::from_str(include_str!("fixtures/density.json")).unwrap();
    f.cases
}

/// For each summary position, search every document offset for the longest
/// shared run. Same greedy rule, written without the skip-ahead.
fn brute_density(summary: &str, document: &str) -> f64 {
    let s = normalized_tokens(summary);
    let d = normalized_tokens(document);
    if s.is_empty() {
        return 0.0;
    }
    let mut i = 0;
    let mut total = 0usize;
    while i < s.len() {
        let best = (0..d.len())
            .map(|j| (0..).take_while(|&k| i + k < s.len() && j + k < d.len() && s[i + k] == d[j + k]).count())
            .max()
            .unwrap_or(0);
        total += best * best;
        i += best.max(1);
    }
    total as f64 / s.len() as f64
}

#[test]
fn density_matches_hand_fixtures() {
    let cases = density_cases();
    assert_eq!(cases.len(), 20);
    for c in &cases {
        let expected = f64::from(c.numerator) / f64::from(c.denominator);
        let got = density(&c.summary, &c.document);
        assert!((got.value - expected).abs() < 1e-9, "{:?}: {} vs {}", c.summary, got.value, expected);
        assert!((brute_density(&c.summary, &c.document) - expected).abs() < 1e-9, "{:?}", c.summary);
        assert_eq!(got.empty_summary, c.kind == "empty");
    }
}

#[test]
fn verbatim_summaries_are_denser_than_abstractive_ones() {
    let cases = density_cases();
    let mean_of = |kind: &str| {
        let v: Vec<f64> = cases.iter().filter(|c| c.kind == kind).map(|c| density(&c.summary, &c.document).value).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (verbatim, abstractive) = (mean_of("verbatim"), mean_of("abstractive"));
    assert!(verbatim > 4.0 * abstractive, "{verbatim} vs {abstractive}");
}

fn word_seq() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..9).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn edit_distance_is_a_metric(a in word_seq(), b in word_seq(), c in word_seq()) {
        let ab = word_edit_distance(&a, &b);
        prop_assert_eq!(ab, word_edit_distance(&b, &a));
        prop_assert_eq!(ab == 0, a.split_whitespace().eq(b.split_whitespace()));
        prop_assert!(word_edit_distance(&a, &c) <= ab + word_edit_distance(&b, &c));
    }

    #[test]
    fn density_bounds(s in word_seq(), d in word_seq()) {
        let st = normalized_tokens(&s);
        let dt = normalized_tokens(&d);
        let v = density(&s, &d).value;
        prop_assert!(v >= 0.0);
        prop_assert!(v <= st.len() as f64);
        let shares = st.iter().any(|t| dt.contains(t));
        prop_assert_eq!(v == 0.0, !shares);
        let frags = extractive_fragments(&st, &dt);
        prop_assert!(frags.iter().sum::<usize>() <= st.len());
    }
}
