//! Open-ended social chat. The prompt is a set of tagged example dialogues
//! followed by the live conversation; the scenario is shown to the user only.

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    field, is_button, not_in_schema, target, text_payload, word_count, QueryPlan, TaskConfig, TaskLogic,
    Transition,
};
use crate::banks::{Dataset, Scenario, Speaker, TaskBanks, Turn};
use crate::lm::{CompletionSet, DecodingParams};
use crate::survey::{SurveyForm, UnitKind};
use crate::trace::{ActionKind, EndReason, Fields, IllegalAction, Millis, UserAction};

/// Finishing is allowed once the user has taken more than this many turns...
pub const MIN_TURNS_EXCLUSIVE: usize = 10;
/// ...or the conversation has grown past this many words.
pub const MIN_WORDS_EXCLUSIVE: usize = 250;

pub fn decoding_params() -> DecodingParams {
    DecodingParams {
        temperature: 0.9,
        top_k: Some(50),
        max_tokens: 64,
        stop_sequences: Vec::new(),
        num_completions: 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnTags {
    pub conversation: String,
    pub user: String,
    pub bot: String,
}

impl Default for TurnTags {
    fn default() -> Self {
        Self { conversation: "conversation".into(), user: "user".into(), bot: "bot".into() }
    }
}

impl TurnTags {
    fn turn(&self, turn: &Turn) -> String {
        let tag = match turn.speaker {
            Speaker::User => &self.user,
            Speaker::Bot => &self.bot,
        };
        format!("<{tag}>{}</{tag}>", turn.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub scenario: Scenario,
    pub dialogue_history: Vec<Turn>,
    pub user_input: String,
    pub in_context_examples: Vec<Vec<Turn>>,
    pub tags: TurnTags,
    pub turn_count: usize,
    pub total_words: usize,
    /// Indices into `dialogue_history` of bot turns whose completion was filtered.
    pub flagged_turns: Vec<usize>,
}

impl DialogueState {
    pub fn new(banks: &TaskBanks, config: &TaskConfig, rng: &mut ChaCha8Rng) -> Self {
        let scenario = banks.scenarios.choose(rng).expect("scenario bank is non-empty").clone();
        Self::with_scenario(scenario, banks, config)
    }

    pub fn with_scenario(scenario: Scenario, banks: &TaskBanks, config: &TaskConfig) -> Self {
        Self {
            scenario,
            dialogue_history: Vec::new(),
            user_input: String::new(),
            in_context_examples: banks.dialogue_examples.iter().take(config.dialogue_example_count).cloned().collect(),
            tags: config.dialogue_tags.clone(),
            turn_count: 0,
            total_words: 0,
            flagged_turns: Vec::new(),
        }
    }

    /// Example dialogues followed by the live history, each conversation
    /// wrapped in the conversation tag. The scenario is never included.
    pub fn create_prompt(&self) -> String {
        let conv = &self.tags.conversation;
        let mut blocks: Vec<String> = self
            .in_context_examples
            .iter()
            .map(|turns| {
                let body: Vec<String> = turns.iter().map(|t| self.tags.turn(t)).collect();
                format!("<{conv}>\n{}\n</{conv}>", body.join("\n"))
            })
            .collect();
        let live: Vec<String> = self.dialogue_history.iter().map(|t| self.tags.turn(t)).collect();
        blocks.push(format!("<{conv}>\n{}", live.join("\n")));
        blocks.join("\n\n")
    }

    /// Reads the bot turn out of a raw completion: drops a leading bot tag
    /// and anything from the next closing or user tag on.
    pub fn extract_reply(&self, raw: &str) -> String {
        let open = format!("<{}>", self.tags.bot);
        let mut text = raw.trim_start();
        if let Some(rest) = text.strip_prefix(&open) {
            text = rest;
        }
        let cuts = [
            format!("</{}>", self.tags.bot),
            format!("<{}>", self.tags.user),
            format!("</{}>", self.tags.conversation),
        ];
        let end = cuts.iter().filter_map(|c| text.find(c.as_str())).min().unwrap_or(text.len());
        text[..end].trim().to_string()
    }

    pub fn bot_turns(&self) -> usize {
        self.dialogue_history.iter().filter(|t| t.speaker == Speaker::Bot).count()
    }
}

impl TaskLogic for DialogueState {
    fn visible(&self) -> Fields {
        Fields::from([
            ("scenario".into(), field(&self.scenario.text)),
            ("dialogue_history".into(), field(&self.dialogue_history)),
            ("user_input".into(), field(&self.user_input)),
            ("turn_count".into(), field(self.turn_count)),
            ("total_words".into(), field(self.total_words)),
            ("finish_allowed".into(), field(self.finish_allowed())),
        ])
    }

    fn hidden(&self) -> Fields {
        Fields::from([
            ("in_context_examples".into(), field(&self.in_context_examples)),
            ("scenario_id".into(), field(&self.scenario.id)),
            ("dataset".into(), field(self.scenario.dataset)),
            ("flagged_turns".into(), field(&self.flagged_turns)),
        ])
    }

    fn route(&self, action: &UserAction) -> Result<Transition, IllegalAction> {
        match action.kind {
            ActionKind::TypeText if target(action) == "user_input" => Ok(Transition::Update),
            ActionKind::ClickButton if is_button(action, "send") => Ok(Transition::Query),
            _ => Err(not_in_schema(action)),
        }
    }

    fn update(&self, action: &UserAction, _now: Millis) -> Result<Self, IllegalAction> {
        let mut next = self.clone();
        next.user_input = text_payload(action)?.to_string();
        Ok(next)
    }

    fn begin_query(&self, _action: &UserAction, _now: Millis) -> Result<(Self, QueryPlan), IllegalAction> {
        let text = self.user_input.trim();
        if text.is_empty() {
            return Err(IllegalAction::EmptyInput);
        }
        let mut next = self.clone();
        next.dialogue_history.push(Turn { speaker: Speaker::User, text: text.to_string() });
        next.turn_count += 1;
        next.total_words += word_count(text);
        next.user_input.clear();
        let plan = QueryPlan { prompt: next.create_prompt(), params: decoding_params(), unit: Some(next.turn_count - 1) };
        Ok((next, plan))
    }

    fn show_completions(mut self, _plan: &QueryPlan, set: &CompletionSet, _now: Millis) -> Self {
        let (text, flagged) = match set.completions.first() {
            Some(c) if c.filtered => (c.text.clone(), true),
            Some(c) => (self.extract_reply(&c.text), false),
            None => (String::new(), true),
        };
        if flagged {
            self.flagged_turns.push(self.dialogue_history.len());
        }
        self.total_words += word_count(&text);
        self.dialogue_history.push(Turn { speaker: Speaker::Bot, text });
        self
    }

    fn finish_allowed(&self) -> bool {
        self.turn_count > MIN_TURNS_EXCLUSIVE || self.total_words > MIN_WORDS_EXCLUSIVE
    }

    fn completed(&self) -> Option<EndReason> {
        None
    }

    fn survey_units(&self, form: &SurveyForm) -> usize {
        match form.units {
            UnitKind::Response => self.bot_turns(),
            _ => 0,
        }
    }

    fn dataset(&self) -> Option<Dataset> {
        Some(self.scenario.dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{Completion, FinishReason};

    fn state(examples: usize) -> DialogueState {
        let banks = TaskBanks::bundled();
        let config = TaskConfig { dialogue_example_count: examples, ..TaskConfig::default() };
        DialogueState::with_scenario(banks.scenarios[0].clone(), &banks, &config)
    }

    fn reply(text: &str) -> CompletionSet {
        CompletionSet {
            completions: vec![Completion { text: text.into(), finish_reason: FinishReason::Length, filtered: false }],
            latency_ms: 0,
        }
    }

    #[test]
    fn prompt_ends_with_user_turn_and_omits_scenario() {
        let mut s = state(4);
        s.user_input = "Hi".into();
        let (staged, plan) = s.begin_query(&UserAction::click("send", 0), 0).unwrap();
        assert!(plan.prompt.ends_with("<user>Hi</user>"));
        assert!(!plan.prompt.contains(&s.scenario.text));
        assert_eq!(plan.prompt.matches("<conversation>").count(), 5);
        assert_eq!(staged.user_input, "");
        assert_eq!(staged.turn_count, 1);
    }

    #[test]
    fn empty_example_bank_gives_bare_history() {
        let mut s = state(0);
        s.user_input = "Hello there".into();
        let (_, plan) = s.begin_query(&UserAction::click("send", 0), 0).unwrap();
        assert_eq!(plan.prompt, "<conversation>\n<user>Hello there</user>");
    }

    #[test]
    fn reply_extraction() {
        let s = state(0);
        assert_eq!(s.extract_reply("<bot>Sure thing!</bot>\n<user>more"), "Sure thing!");
        assert_eq!(s.extract_reply(" plain text "), "plain text");
    }

    #[test]
    fn finish_gate() {
        let mut s = state(0);
        s.turn_count = 10;
        s.total_words = 200;
        assert!(!s.finish_allowed());
        s.turn_count = 11;
        assert!(s.finish_allowed());
        s.turn_count = 5;
        s.total_words = 251;
        assert!(s.finish_allowed());
        s.total_words = 250;
        assert!(!s.finish_allowed());
    }

    #[test]
    fn word_counts_cover_both_speakers() {
        let mut s = state(0);
        s.user_input = "one two three".into();
        let (staged, plan) = s.begin_query(&UserAction::click("send", 0), 0).unwrap();
        let after = staged.show_completions(&plan, &reply("<bot>four five</bot>"), 10);
        assert_eq!(after.total_words, 5);
        assert_eq!(after.bot_turns(), 1);
    }
}
