//! Metaphorical sentence writing with a suggestion popup. Each query sends
//! three fixed example pairs followed by the seed metaphor and asks for five
//! sentence continuations.

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{choice_payload, field, is_button, not_in_schema, target, text_payload, QueryPlan, TaskLogic, Transition};
use crate::banks::TaskBanks;
use crate::lm::{CompletionSet, DecodingParams};
use crate::survey::{SurveyForm, UnitKind};
use crate::trace::{ActionKind, EndReason, Fields, IllegalAction, Millis, UserAction};

pub const TIME_LIMIT_MS: Millis = 10 * 60 * 1000;
pub const SUGGESTION_COUNT: u32 = 5;
pub const SENTENCE_CUE: &str = "Metaphorical Sentence:";

pub const EXAMPLE_PAIRS: [(&str, &str); 3] = [
    ("Argument is war.", "He attacked every weak point in my argument."),
    ("Time is money.", "Is that worth your while?"),
    ("Love is a journey.", "We'll just have to go our separate ways."),
];

pub fn decoding_params() -> DecodingParams {
    DecodingParams {
        temperature: 0.9,
        top_k: None,
        max_tokens: 30,
        stop_sequences: vec!["Metaphor:".to_string()],
        num_completions: SUGGESTION_COUNT,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub metaphor: String,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub text: String,
    pub filtered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Pending,
    Selected,
    Dismissed,
    /// Replaced by a new query before the user acted on it.
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub sentence_index: usize,
    pub shown_at: Millis,
    pub shown: usize,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub index: usize,
    pub text: String,
    pub started_at: Millis,
    pub submitted_at: Millis,
    pub queries: usize,
    /// The suggestion the user last picked while writing this sentence.
    pub accepted_suggestion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaphorState {
    pub seed_metaphor: String,
    pub sentences: Vec<SentenceRecord>,
    pub user_input: String,
    /// All five completions of the open query, filtered ones included.
    pub suggestions: Option<Vec<Suggestion>>,
    pub in_context_examples: Vec<ExamplePair>,
    pub started_at: Millis,
    pub queries: Vec<QueryRecord>,
    pub sentence_started_at: Millis,
    pub sentence_queries: usize,
    pub sentence_accepted: Option<String>,
}

impl MetaphorState {
    pub fn new(banks: &TaskBanks, rng: &mut ChaCha8Rng, now: Millis) -> Self {
        let seed = banks.metaphors.choose(rng).expect("metaphor bank is non-empty");
        Self::with_seed(&seed.text, now)
    }

    pub fn with_seed(seed: &str, now: Millis) -> Self {
        Self {
            seed_metaphor: seed.to_string(),
            sentences: Vec::new(),
            user_input: String::new(),
            suggestions: None,
            in_context_examples: EXAMPLE_PAIRS
                .iter()
                .map(|(m, s)| ExamplePair { metaphor: m.to_string(), sentence: s.to_string() })
                .collect(),
            started_at: now,
            queries: Vec::new(),
            sentence_started_at: now,
            sentence_queries: 0,
            sentence_accepted: None,
        }
    }

    pub fn create_prompt(&self) -> String {
        let mut blocks: Vec<String> = self
            .in_context_examples
            .iter()
            .map(|p| format!("Metaphor: {}\n{SENTENCE_CUE} {}", p.metaphor, p.sentence))
            .collect();
        let seed = self.seed_metaphor.trim().trim_end_matches('.');
        blocks.push(format!("Metaphor: {seed}.\n{SENTENCE_CUE}"));
        blocks.join("\n\n")
    }

    /// Suggestions the popup shows: the unfiltered ones, in order.
    pub fn displayed(&self) -> Vec<&str> {
        self.suggestions
            .iter()
            .flatten()
            .filter(|s| !s.filtered)
            .map(|s| s.text.as_str())
            .collect()
    }

    fn resolve_open(&mut self, resolution: Resolution) {
        if let Some(q) = self.queries.last_mut() {
            if q.resolution == Resolution::Pending {
                q.resolution = resolution;
            }
        }
        self.suggestions = None;
    }
}

impl TaskLogic for MetaphorState {
    fn visible(&self) -> Fields {
        Fields::from([
            ("seed_metaphor".into(), field(&self.seed_metaphor)),
            ("sentences".into(), field(self.sentences.iter().map(|s| &s.text).collect::<Vec<_>>())),
            ("user_input".into(), field(&self.user_input)),
            ("suggestions".into(), field(self.suggestions.as_ref().map(|_| self.displayed()))),
            ("started_at".into(), field(self.started_at)),
            ("time_limit_ms".into(), field(TIME_LIMIT_MS)),
        ])
    }

    fn hidden(&self) -> Fields {
        Fields::from([
            ("in_context_examples".into(), field(&self.in_context_examples)),
            ("raw_suggestions".into(), field(&self.suggestions)),
            ("queries".into(), field(&self.queries)),
            ("sentence_records".into(), field(&self.sentences)),
        ])
    }

    fn route(&self, action: &UserAction) -> Result<Transition, IllegalAction> {
        match action.kind {
            ActionKind::TypeText if target(action) == "user_input" => Ok(Transition::Update),
            ActionKind::SelectOption if target(action) == "suggestions" => Ok(Transition::Update),
            ActionKind::ClickButton if is_button(action, "dismiss") || is_button(action, "submit") => {
                Ok(Transition::Update)
            }
            ActionKind::ClickButton if is_button(action, "get_suggestions") => Ok(Transition::Query),
            _ => Err(not_in_schema(action)),
        }
    }

    fn update(&self, action: &UserAction, now: Millis) -> Result<Self, IllegalAction> {
        let mut next = self.clone();
        match action.kind {
            ActionKind::TypeText => next.user_input = text_payload(action)?.to_string(),
            ActionKind::SelectOption => {
                let i = choice_payload(action)?;
                if self.suggestions.is_none() {
                    return Err(IllegalAction::NotReady("no suggestions are open".into()));
                }
                let shown = self.displayed();
                let Some(text) = shown.get(i) else {
                    return Err(IllegalAction::BadPayload(format!("suggestion {i} out of range")));
                };
                next.user_input = text.trim().to_string();
                next.sentence_accepted = Some(next.user_input.clone());
                next.resolve_open(Resolution::Selected);
            }
            _ if is_button(action, "dismiss") => {
                if self.suggestions.is_none() {
                    return Err(IllegalAction::NotReady("no suggestions are open".into()));
                }
                next.resolve_open(Resolution::Dismissed);
            }
            _ => {
                let text = self.user_input.trim();
                if text.is_empty() {
                    return Err(IllegalAction::EmptyInput);
                }
                if next.suggestions.is_some() {
                    next.resolve_open(Resolution::Superseded);
                }
                next.sentences.push(SentenceRecord {
                    index: self.sentences.len(),
                    text: text.to_string(),
                    started_at: self.sentence_started_at,
                    submitted_at: now,
                    queries: self.sentence_queries,
                    accepted_suggestion: self.sentence_accepted.clone(),
                });
                next.user_input.clear();
                next.sentence_started_at = now;
                next.sentence_queries = 0;
                next.sentence_accepted = None;
            }
        }
        Ok(next)
    }

    fn begin_query(&self, _action: &UserAction, _now: Millis) -> Result<(Self, QueryPlan), IllegalAction> {
        let mut next = self.clone();
        if next.suggestions.is_some() {
            next.resolve_open(Resolution::Superseded);
        }
        next.sentence_queries += 1;
        let plan = QueryPlan { prompt: self.create_prompt(), params: decoding_params(), unit: Some(self.sentences.len()) };
        Ok((next, plan))
    }

    fn show_completions(mut self, _plan: &QueryPlan, set: &CompletionSet, now: Millis) -> Self {
        let suggestions: Vec<Suggestion> = set
            .completions
            .iter()
            .map(|c| Suggestion { text: c.text.trim().to_string(), filtered: c.filtered })
            .collect();
        let shown = suggestions.iter().filter(|s| !s.filtered).count();
        self.queries.push(QueryRecord {
            sentence_index: self.sentences.len(),
            shown_at: now,
            shown,
            resolution: Resolution::Pending,
        });
        self.suggestions = Some(suggestions);
        self
    }

    fn finish_allowed(&self) -> bool {
        true
    }

    fn completed(&self) -> Option<EndReason> {
        None
    }

    fn time_limit(&self) -> Option<Millis> {
        Some(TIME_LIMIT_MS)
    }

    fn survey_units(&self, form: &SurveyForm) -> usize {
        match form.units {
            UnitKind::Sentence => self.sentences.len(),
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{Completion, FinishReason};

    fn set(texts: &[(&str, bool)]) -> CompletionSet {
        CompletionSet {
            completions: texts
                .iter()
                .map(|(t, f)| Completion { text: t.to_string(), finish_reason: FinishReason::Length, filtered: *f })
                .collect(),
            latency_ms: 0,
        }
    }

    #[test]
    fn prompt_shape() {
        let s = MetaphorState::with_seed("Time is money", 0);
        let p = s.create_prompt();
        assert!(p.ends_with("Metaphor: Time is money.\nMetaphorical Sentence:"));
        assert!(p.starts_with("Metaphor: Argument is war.\nMetaphorical Sentence: He attacked every weak point in my argument.\n\n"));
        assert_eq!(p.matches("Metaphor:").count(), 4);
    }

    #[test]
    fn select_fills_input_and_dismiss_keeps_it() {
        let s = MetaphorState::with_seed("Life is a river", 0);
        let (staged, plan) = s.begin_query(&UserAction::click("get_suggestions", 0), 0).unwrap();
        let s = staged.show_completions(&plan, &set(&[("a", false), ("b", true), ("c", false), ("d", false), ("e", false)]), 5);
        assert_eq!(s.displayed(), ["a", "c", "d", "e"]);
        let picked = s.update(&UserAction::select("suggestions", 1, 6), 6).unwrap();
        assert_eq!(picked.user_input, "c");
        assert_eq!(picked.queries[0].resolution, Resolution::Selected);
        let mut typed = s.clone();
        typed.user_input = "draft".into();
        let dismissed = typed.update(&UserAction::click("dismiss", 6), 6).unwrap();
        assert_eq!(dismissed.user_input, "draft");
        assert_eq!(dismissed.suggestions, None);
        assert_eq!(dismissed.queries[0].resolution, Resolution::Dismissed);
    }

    #[test]
    fn submit_records_sentence() {
        let mut s = MetaphorState::with_seed("Life is a river", 0);
        s.user_input = "My days flow on.".into();
        let s = s.update(&UserAction::click("submit", 9), 9).unwrap();
        assert_eq!(s.sentences[0].text, "My days flow on.");
        assert_eq!(s.sentences[0].submitted_at, 9);
        assert!(s.update(&UserAction::click("submit", 10), 10).is_err());
    }
}
