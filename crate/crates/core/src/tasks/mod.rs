//! The five task systems. Each task state knows its visible and hidden
//! fields, which actions it accepts, how to build a prompt, where to show
//! completions and when the session is over.

pub mod crossword;
pub mod dialogue;
pub mod metaphor;
pub mod qa;
pub mod summarization;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::banks::{Dataset, TaskBanks};
use crate::lm::{CompletionSet, DecodingParams};
use crate::survey::SurveyForm;
use crate::trace::{ActionKind, EndReason, Fields, IllegalAction, Millis, Payload, UserAction};

pub use crossword::CrosswordState;
pub use dialogue::DialogueState;
pub use metaphor::MetaphorState;
pub use qa::QaState;
pub use summarization::SummarizationState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Dialogue,
    Qa,
    Crossword,
    Summarization,
    Metaphor,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Dialogue,
        TaskKind::Qa,
        TaskKind::Crossword,
        TaskKind::Summarization,
        TaskKind::Metaphor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Dialogue => "dialogue",
            TaskKind::Qa => "qa",
            TaskKind::Crossword => "crossword",
            TaskKind::Summarization => "summarization",
            TaskKind::Metaphor => "metaphor",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown task {s:?}"))
    }
}

/// How an action is routed through the transition function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Build a prompt, query the LM and show the completions.
    Query,
    /// Plain textual or visual update.
    Update,
}

/// A prompt ready to send, along with the unit (question, summary, ...) it
/// is attributed to.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub prompt: String,
    pub params: DecodingParams,
    pub unit: Option<usize>,
}

/// Behaviour shared by every task state.
pub trait TaskLogic: Sized + Clone {
    fn visible(&self) -> Fields;
    fn hidden(&self) -> Fields;
    fn route(&self, action: &UserAction) -> Result<Transition, IllegalAction>;
    fn update(&self, action: &UserAction, now: Millis) -> Result<Self, IllegalAction>;
    /// Stages the state for a query and returns the prompt (CreatePrompt).
    fn begin_query(&self, action: &UserAction, now: Millis) -> Result<(Self, QueryPlan), IllegalAction>;
    /// Places completions in the staged state (ShowCompletions).
    fn show_completions(self, plan: &QueryPlan, set: &CompletionSet, now: Millis) -> Self;
    fn finish_allowed(&self) -> bool;
    /// A terminal condition other than an explicit finish or the timer.
    fn completed(&self) -> Option<EndReason>;
    fn time_limit(&self) -> Option<Millis> {
        None
    }
    /// Number of units (responses, summaries, sentences) a survey form covers.
    fn survey_units(&self, form: &SurveyForm) -> usize;
    fn dataset(&self) -> Option<Dataset> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Dialogue(DialogueState),
    Qa(QaState),
    Crossword(CrosswordState),
    Summarization(SummarizationState),
    Metaphor(MetaphorState),
}

macro_rules! dispatch {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            TaskState::Dialogue($s) => $body,
            TaskState::Qa($s) => $body,
            TaskState::Crossword($s) => $body,
            TaskState::Summarization($s) => $body,
            TaskState::Metaphor($s) => $body,
        }
    };
}

macro_rules! dispatch_wrap {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            TaskState::Dialogue($s) => $body.map(TaskState::Dialogue),
            TaskState::Qa($s) => $body.map(TaskState::Qa),
            TaskState::Crossword($s) => $body.map(TaskState::Crossword),
            TaskState::Summarization($s) => $body.map(TaskState::Summarization),
            TaskState::Metaphor($s) => $body.map(TaskState::Metaphor),
        }
    };
}

impl TaskState {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskState::Dialogue(_) => TaskKind::Dialogue,
            TaskState::Qa(_) => TaskKind::Qa,
            TaskState::Crossword(_) => TaskKind::Crossword,
            TaskState::Summarization(_) => TaskKind::Summarization,
            TaskState::Metaphor(_) => TaskKind::Metaphor,
        }
    }

    pub fn visible(&self) -> Fields {
        dispatch!(self, s => s.visible())
    }

    pub fn hidden(&self) -> Fields {
        dispatch!(self, s => s.hidden())
    }

    pub fn route(&self, action: &UserAction) -> Result<Transition, IllegalAction> {
        dispatch!(self, s => s.route(action))
    }

    pub fn update(&self, action: &UserAction, now: Millis) -> Result<TaskState, IllegalAction> {
        dispatch_wrap!(self, s => s.update(action, now))
    }

    pub fn begin_query(&self, action: &UserAction, now: Millis) -> Result<(TaskState, QueryPlan), IllegalAction> {
        match self {
            TaskState::Dialogue(s) => s.begin_query(action, now).map(|(s, p)| (TaskState::Dialogue(s), p)),
            TaskState::Qa(s) => s.begin_query(action, now).map(|(s, p)| (TaskState::Qa(s), p)),
            TaskState::Crossword(s) => s.begin_query(action, now).map(|(s, p)| (TaskState::Crossword(s), p)),
            TaskState::Summarization(s) => {
                s.begin_query(action, now).map(|(s, p)| (TaskState::Summarization(s), p))
            }
            TaskState::Metaphor(s) => s.begin_query(action, now).map(|(s, p)| (TaskState::Metaphor(s), p)),
        }
    }

    pub fn show_completions(self, plan: &QueryPlan, set: &CompletionSet, now: Millis) -> TaskState {
        match self {
            TaskState::Dialogue(s) => TaskState::Dialogue(s.show_completions(plan, set, now)),
            TaskState::Qa(s) => TaskState::Qa(s.show_completions(plan, set, now)),
            TaskState::Crossword(s) => TaskState::Crossword(s.show_completions(plan, set, now)),
            TaskState::Summarization(s) => TaskState::Summarization(s.show_completions(plan, set, now)),
            TaskState::Metaphor(s) => TaskState::Metaphor(s.show_completions(plan, set, now)),
        }
    }

    pub fn finish_allowed(&self) -> bool {
        dispatch!(self, s => s.finish_allowed())
    }

    pub fn completed(&self) -> Option<EndReason> {
        dispatch!(self, s => s.completed())
    }

    pub fn time_limit(&self) -> Option<Millis> {
        dispatch!(self, s => s.time_limit())
    }

    pub fn survey_units(&self, form: &SurveyForm) -> usize {
        dispatch!(self, s => s.survey_units(form))
    }

    pub fn dataset(&self) -> Option<Dataset> {
        dispatch!(self, s => s.dataset())
    }
}

/// Per-deployment task options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    /// Number of example dialogues placed before the live conversation.
    pub dialogue_example_count: usize,
    pub dialogue_tags: dialogue::TurnTags,
    /// Whether the first summarization prompt carries the one-shot example.
    pub summarization_seed_example: bool,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            dialogue_example_count: 4,
            dialogue_tags: dialogue::TurnTags::default(),
            summarization_seed_example: true,
        }
    }
}

/// Builds the initial task state for a session.
pub trait TaskAdapter: Send + Sync {
    fn kind(&self) -> TaskKind;
    fn initial_state(&self, seed: u64, now: Millis) -> TaskState;
}

pub struct BankAdapter {
    kind: TaskKind,
    banks: Arc<TaskBanks>,
    config: TaskConfig,
}

impl BankAdapter {
    pub fn new(kind: TaskKind, banks: Arc<TaskBanks>, config: TaskConfig) -> Self {
        Self { kind, banks, config }
    }
}

impl TaskAdapter for BankAdapter {
    fn kind(&self) -> TaskKind {
        self.kind
    }

    fn initial_state(&self, seed: u64, now: Millis) -> TaskState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let banks = &self.banks;
        match self.kind {
            TaskKind::Dialogue => TaskState::Dialogue(DialogueState::new(banks, &self.config, &mut rng)),
            TaskKind::Qa => TaskState::Qa(QaState::new(&banks.quiz, &mut rng, now)),
            TaskKind::Crossword => TaskState::Crossword(CrosswordState::new(banks, &mut rng, now)),
            TaskKind::Summarization => {
                TaskState::Summarization(SummarizationState::new(banks, &self.config, &mut rng))
            }
            TaskKind::Metaphor => TaskState::Metaphor(MetaphorState::new(banks, &mut rng, now)),
        }
    }
}

pub(crate) fn not_in_schema(action: &UserAction) -> IllegalAction {
    IllegalAction::NotInSchema {
        kind: action.kind,
        target: action.target_field.clone(),
    }
}

pub(crate) fn target(action: &UserAction) -> &str {
    action.target_field.as_deref().unwrap_or("")
}

pub(crate) fn text_payload(action: &UserAction) -> Result<&str, IllegalAction> {
    match &action.payload {
        Some(Payload::Text(t)) => Ok(t),
        _ => Err(IllegalAction::BadPayload("expected text".into())),
    }
}

pub(crate) fn choice_payload(action: &UserAction) -> Result<usize, IllegalAction> {
    match &action.payload {
        Some(Payload::Choice(i)) => Ok(*i),
        _ => Err(IllegalAction::BadPayload("expected an option index".into())),
    }
}

pub(crate) fn is_button(action: &UserAction, name: &str) -> bool {
    action.kind == ActionKind::ClickButton && target(action) == name
}

pub(crate) fn field<T: Serialize>(value: T) -> Value {
    serde_json::to_value(value).expect("field serializes")
}

pub(crate) fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_kind_round_trip() {
        for k in TaskKind::ALL {
            assert_eq!(k.as_str().parse::<TaskKind>().unwrap(), k);
            assert_eq!(serde_json::to_value(k).unwrap(), Value::String(k.to_string()));
        }
        assert!("chess".parse::<TaskKind>().is_err());
    }
}
