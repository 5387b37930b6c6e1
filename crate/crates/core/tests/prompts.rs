mod common;

use common::{client, initial, requests, Driver};
use interlace_core::lm::DecodingParams;
use interlace_core::survey::SurveyBank;
use interlace_core::tasks::summarization::{SEED_DOCUMENT, SEED_SUMMARY};
use interlace_core::{TaskKind, TaskState};

fn params(temperature: f64, top_k: Option<u32>, max_tokens: u32, stop: &[&str], n: u32) -> DecodingParams {
    DecodingParams {
        temperature,
        top_k,
        max_tokens,
        stop_sequences: stop.iter().map(|s| s.to_string()).collect(),
        num_completions: n,
    }
}

#[test]
fn dialogue_prompt_and_params() {
    let lm = client("mock-alpha");
    let surveys = SurveyBank::bundled();
    let mut d = Driver::new(initial(TaskKind::Dialogue, 21), &lm, &surveys);
    let TaskState::Dialogue(s) = &d.state().task else { panic!() };
    assert_eq!(s.in_context_examples.len(), 4);
    let scenario = s.scenario.text.clone();
    d.type_text("user_input", "What should I cook tonight?");
    d.click("send");
    d.type_text("user_input", "Something quick please.");
    d.click("send");
    let reqs = requests(&d.into_trace());
    assert_eq!(reqs.len(), 2);
    for (i, (prompt, p, unit)) in reqs.iter().enumerate() {
        assert_eq!(p, &params(0.9, Some(50), 64, &[], 1));
        assert_eq!(prompt.matches("<conversation>").count(), 5);
        assert!(!prompt.contains(&scenario));
        assert_eq!(*unit, Some(i));
    }
    assert!(reqs[0].0.ends_with("<user>What should I cook tonight?</user>"));
    assert!(reqs[1].0.contains("<user>What should I cook tonight?</user>"));
    assert!(reqs[1].0.ends_with("<user>Something quick please.</user>"));
}

#[test]
fn qa_prompt_is_input_verbatim() {
    let lm = client("mock-alpha");
    let surveys = SurveyBank::bundled();
    let mut d = Driver::new(initial(TaskKind::Qa, 22), &lm, &surveys);
    let TaskState::Qa(s) = &d.state().task else { panic!() };
    let first_assisted = s.quiz.iter().position(|q| q.assisted).unwrap();
    for _ in 0..first_assisted {
        d.select("choice", 0);
        d.click("next");
    }
    let typed = "  who wrote it? Answer in one word  ";
    d.type_text("user_input", typed);
    d.click("generate");
    let reqs = requests(&d.into_trace());
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].0, typed);
    assert_eq!(reqs[0].1, params(0.5, None, 100, &[], 1));
}

#[test]
fn crossword_sends_latest_message_only() {
    let lm = client("mock-alpha");
    let surveys = SurveyBank::bundled();
    let mut d = Driver::new(initial(TaskKind::Crossword, 23), &lm, &surveys);
    d.type_text("user_input", "first question");
    d.click("send");
    d.type_text("user_input", "second question");
    d.click("send");
    let TaskState::Crossword(s) = &d.state().task else { panic!() };
    assert_eq!(s.chat_history.len(), 4);
    let reqs = requests(&d.into_trace());
    let prompts: Vec<&str> = reqs.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(prompts, ["first question", "second question"]);
    assert!(reqs.iter().all(|r| r.1 == params(0.5, None, 100, &[], 1)));
}

#[test]
fn summarization_prompt_accumulates_edits() {
    let lm = client("mock-alpha");
    let surveys = SurveyBank::bundled();
    let mut d = Driver::new(initial(TaskKind::Summarization, 24), &lm, &surveys);
    d.click("start");
    for k in 0..3 {
        d.type_text("edited_summary", &format!("My edit {k}."));
        d.click("next");
    }
    let trace = d.into_trace();
    let reqs = requests(&trace);
    assert_eq!(reqs.len(), 4);
    for (k, (prompt, p, unit)) in reqs.iter().enumerate() {
        assert_eq!(p, &params(0.3, None, 64, &["***"], 1));
        assert_eq!(*unit, Some(k));
        assert_eq!(prompt.matches("\n***\n").count(), k + 1, "request {k}");
        assert!(prompt.starts_with(&format!("Document: {SEED_DOCUMENT}\nSummary: {SEED_SUMMARY}\n***\n")));
        assert!(prompt.ends_with("\nSummary:"));
        for j in 0..k {
            assert!(prompt.contains(&format!("Summary: My edit {j}.\n***\n")));
        }
    }
}

#[test]
fn metaphor_prompt_and_params() {
    let lm = client("mock-alpha");
    let surveys = SurveyBank::bundled();
    let mut d = Driver::new(initial(TaskKind::Metaphor, 25), &lm, &surveys);
    let TaskState::Metaphor(s) = &d.state().task else { panic!() };
    let seed = s.seed_metaphor.trim().trim_end_matches('.').to_string();
    d.click("get_suggestions");
    let reqs = requests(&d.into_trace());
    assert_eq!(reqs.len(), 1);
    let (prompt, p, _) = &reqs[0];
    assert_eq!(p, &params(0.9, None, 30, &["Metaphor:"], 5));
    assert_eq!(prompt.matches("Metaphor: ").count(), 4);
    assert_eq!(prompt.matches("Metaphorical Sentence:").count(), 4);
    assert!(prompt.starts_with("Metaphor: Argument is war.\nMetaphorical Sentence: He attacked every weak point"));
    assert!(prompt.ends_with(&format!("Metaphor: {seed}.\nMetaphorical Sentence:")));
}
