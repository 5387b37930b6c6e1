use std::collections::BTreeSet;

use interlace_core::survey::{
    aggregate_submissions, score_item, Answer, ItemResponse, ItemScore, Respondent, Scale, SurveyBank, SurveyItem,
    SurveySubmission,
};
use interlace_core::Blocklist;
use proptest::prelude::*;

const WORDS: &[&str] = &["cat", "Cats", "scat", "dog", "dogma", "hot", "hotdog", "snake_case", "émile", "42"];
const SEPARATORS: &[&str] = &[" ", ", ", ".", "!\n", "-", "'", "\t", "..."];

/// Splits on anything that is not alphanumeric or underscore.
fn tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(WORDS), prop::sample::select(SEPARATORS)), 0..12)
        .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
}

proptest! {
    #[test]
    fn blocklist_matches_whole_tokens(
        text in text_strategy(),
        keys in prop::collection::vec(prop::sample::select(WORDS), 0..3),
    ) {
        let list = Blocklist::new(&keys);
        let toks = tokens(&text);
        let expected = keys.iter().any(|k| toks.contains(&k.to_lowercase()));
        prop_assert_eq!(list.matches(&text), expected);
        prop_assert_eq!(list.matches(&text.to_uppercase()), expected);
    }

    #[test]
    fn reversal_is_complementary(marks in prop::collection::btree_set(0usize..8, 0..8), n in 1usize..8) {
        let marks: BTreeSet<usize> = marks.into_iter().filter(|&u| u < n).collect();
        let item = |negated| SurveyItem {
            id: "x".into(),
            prompt: String::new(),
            scale: Scale::BinaryMarking,
            negated,
            optional: false,
            metric: Some("m".into()),
            dataset: None,
        };
        let answer = Answer::Marked { units: marks.clone(), none_acknowledged: true };
        let (Ok(ItemScore::PerUnit(plain)), Ok(ItemScore::PerUnit(reversed))) =
            (score_item(&item(false), &answer, n), score_item(&item(true), &answer, n))
        else {
            panic!("binary items score per unit");
        };
        prop_assert_eq!(plain.len(), n);
        for u in 0..n {
            prop_assert_eq!(plain[u] + reversed[u], 1.0);
            prop_assert_eq!(plain[u], if marks.contains(&u) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn bundled_rates_are_percentages(
        marks in prop::collection::vec(prop::collection::btree_set(0usize..6, 0..6), 1..4),
        units in 1usize..6,
    ) {
        let bank = SurveyBank::bundled();
        for form in &bank.forms {
            let binary: Vec<&SurveyItem> =
                form.items.iter().filter(|i| i.scale == Scale::BinaryMarking && i.metric.is_some()).collect();
            if binary.is_empty() {
                continue;
            }
            let subs: Vec<SurveySubmission> = marks
                .iter()
                .map(|m| SurveySubmission {
                    form: form.id.clone(),
                    unit: None,
                    respondent: Respondent::FirstPerson,
                    responses: binary
                        .iter()
                        .map(|i| ItemResponse {
                            item_id: i.id.clone(),
                            answer: Answer::Marked {
                                units: m.iter().copied().filter(|&u| u < units).collect(),
                                none_acknowledged: true,
                            },
                        })
                        .collect(),
                })
                .collect();
            let rates = aggregate_submissions(&bank, &subs, |_| units).unwrap();
            for item in &binary {
                let rate = rates[item.metric.as_ref().unwrap()];
                prop_assert!((0.0..=100.0).contains(&rate), "{} = {rate}", item.id);
            }
        }
    }
}

#[test]
fn unacknowledged_empty_marking_is_rejected() {
    let bank = SurveyBank::bundled();
    let item = bank
        .forms
        .iter()
        .flat_map(|f| &f.items)
        .find(|i| i.scale == Scale::BinaryMarking)
        .unwrap();
    let answer = Answer::Marked { units: BTreeSet::new(), none_acknowledged: false };
    assert!(score_item(item, &answer, 3).is_err());
    let answer = Answer::Marked { units: BTreeSet::from([3]), none_acknowledged: false };
    assert!(score_item(item, &answer, 3).is_err());
}
