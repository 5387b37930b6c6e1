use interlace_analysis::classify::{classify_prompt, PromptCategory};
use interlace_core::TaskKind;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    input: String,
    question_text: String,
    choices: Vec<String>,
    task: TaskKind,
    expected: PromptCategory,
}

#[test]
fn labelled_prompts_are_classified_exactly() {
    #[derive(Deserialize)]
    struct File {
        cases: Vec<Case>,
    }
    let f: File = serde_json::from_str(include_str!("fixtures/classify.json")).unwrap();
    assert_eq!(f.cases.len(), 25);
    let wrong: Vec<String> = f
        .cases
        .iter()
        .filter_map(|c| {
            let got = classify_prompt(&c.input, &c.question_text, &c.choices, c.task);
            (got != c.expected).then(|| format!("{:?}: expected {:?}, got {:?}", c.input, c.expected, got))
        })
        .collect();
    assert!(wrong.is_empty(), "{wrong:#?}");
}

#[test]
fn exact_outranks_close() {
    let q = "Which organ pumps blood?";
    assert_eq!(classify_prompt(q, q, &[], TaskKind::Qa), PromptCategory::Exact);
    assert_eq!(classify_prompt("Which organ pumps blood", q, &[], TaskKind::Qa), PromptCategory::Close);
}

#[test]
fn case_does_not_matter_for_token_tests() {
    assert_eq!(classify_prompt("WHO wrote Emma", "", &[], TaskKind::Qa), PromptCategory::Question);
    assert_eq!(classify_prompt("LIST three fruits now please", "", &[], TaskKind::Qa), PromptCategory::Command);
}
