//! Multiple-choice question answering with an assistant. The prompt is the
//! user's free-form input, copied verbatim; the question and its choices are
//! not added.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    choice_payload, field, is_button, not_in_schema, target, text_payload, QueryPlan, TaskLogic, Transition,
};
use crate::banks::{QuizBank, QuizQuestion};
use crate::lm::{CompletionSet, DecodingParams};
use crate::survey::SurveyForm;
use crate::trace::{ActionKind, EndReason, Fields, IllegalAction, Millis, UserAction};

/// Questions drawn from the pool for each quiz.
pub const QUIZ_POOL_DRAW: usize = 10;
/// Pool draws plus the attention check.
pub const QUIZ_LENGTH: usize = QUIZ_POOL_DRAW + 1;
/// The attention check sits in the middle of the quiz.
pub const ATTENTION_INDEX: usize = QUIZ_POOL_DRAW / 2;
/// Pool questions answered with the assistant; the rest are answered alone.
pub const ASSISTED_COUNT: usize = QUIZ_POOL_DRAW / 2;

pub fn decoding_params() -> DecodingParams {
    DecodingParams {
        temperature: 0.5,
        top_k: None,
        max_tokens: 100,
        stop_sequences: Vec::new(),
        num_completions: 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizItem {
    pub question: QuizQuestion,
    pub is_attention_check: bool,
    pub assisted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub index: usize,
    pub question_id: String,
    pub choice: usize,
    pub correct: bool,
    pub assisted: bool,
    pub is_attention_check: bool,
    pub shown_at: Millis,
    pub answered_at: Millis,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaState {
    pub quiz: Vec<QuizItem>,
    pub current_index: usize,
    pub user_input: String,
    pub system_output: String,
    pub output_filtered: bool,
    pub selected_choice: Option<usize>,
    pub question_shown_at: Millis,
    pub queries_this_question: usize,
    pub answers: Vec<AnswerRecord>,
}

impl QaState {
    pub fn new(bank: &QuizBank, rng: &mut ChaCha8Rng, now: Millis) -> Self {
        let picks = sample(rng, bank.pool.len(), QUIZ_POOL_DRAW).into_vec();
        let assisted = sample(rng, QUIZ_POOL_DRAW, ASSISTED_COUNT).into_vec();
        let mut quiz: Vec<QuizItem> = picks
            .iter()
            .enumerate()
            .map(|(slot, &i)| QuizItem {
                question: bank.pool[i].clone(),
                is_attention_check: false,
                assisted: assisted.contains(&slot),
            })
            .collect();
        quiz.insert(
            ATTENTION_INDEX,
            QuizItem { question: bank.attention_check.clone(), is_attention_check: true, assisted: false },
        );
        Self::from_quiz(quiz, now)
    }

    pub fn from_quiz(quiz: Vec<QuizItem>, now: Millis) -> Self {
        Self {
            quiz,
            current_index: 0,
            user_input: String::new(),
            system_output: String::new(),
            output_filtered: false,
            selected_choice: None,
            question_shown_at: now,
            queries_this_question: 0,
            answers: Vec::new(),
        }
    }

    pub fn current(&self) -> &QuizItem {
        &self.quiz[self.current_index]
    }

    pub fn is_complete(&self) -> bool {
        self.answers.len() >= self.quiz.len()
    }

    /// The prompt is the user input, byte for byte.
    pub fn create_prompt(&self) -> Result<String, IllegalAction> {
        if self.user_input.trim().is_empty() {
            return Err(IllegalAction::EmptyInput);
        }
        Ok(self.user_input.clone())
    }
}

impl TaskLogic for QaState {
    fn visible(&self) -> Fields {
        let item = self.current();
        Fields::from([
            ("question".into(), field(&item.question.text)),
            ("choices".into(), field(&item.question.choices)),
            ("question_index".into(), field(self.current_index)),
            ("question_count".into(), field(self.quiz.len())),
            ("assisted".into(), field(item.assisted)),
            ("user_input".into(), field(&self.user_input)),
            ("system_output".into(), field(&self.system_output)),
            ("selected_choice".into(), field(self.selected_choice)),
        ])
    }

    fn hidden(&self) -> Fields {
        Fields::from([
            ("quiz".into(), field(&self.quiz)),
            ("answers".into(), field(&self.answers)),
            ("question_shown_at".into(), field(self.question_shown_at)),
            ("queries_this_question".into(), field(self.queries_this_question)),
            ("output_filtered".into(), field(self.output_filtered)),
        ])
    }

    fn route(&self, action: &UserAction) -> Result<Transition, IllegalAction> {
        if self.is_complete() {
            return Err(IllegalAction::NotReady("the quiz is complete".into()));
        }
        match action.kind {
            ActionKind::TypeText if target(action) == "user_input" => Ok(Transition::Update),
            ActionKind::SelectOption if target(action) == "choice" => Ok(Transition::Update),
            ActionKind::ClickButton if is_button(action, "next") => Ok(Transition::Update),
            ActionKind::ClickButton if is_button(action, "generate") => Ok(Transition::Query),
            _ => Err(not_in_schema(action)),
        }
    }

    fn update(&self, action: &UserAction, now: Millis) -> Result<Self, IllegalAction> {
        let mut next = self.clone();
        match action.kind {
            ActionKind::TypeText => next.user_input = text_payload(action)?.to_string(),
            ActionKind::SelectOption => {
                let i = choice_payload(action)?;
                if i >= self.current().question.choices.len() {
                    return Err(IllegalAction::BadPayload(format!("choice {i} out of range")));
                }
                next.selected_choice = Some(i);
            }
            _ => {
                let Some(choice) = self.selected_choice else {
                    return Err(IllegalAction::NotReady("select an answer first".into()));
                };
                let item = self.current();
                next.answers.push(AnswerRecord {
                    index: self.current_index,
                    question_id: item.question.id.clone(),
                    choice,
                    correct: choice == item.question.gold,
                    assisted: item.assisted,
                    is_attention_check: item.is_attention_check,
                    shown_at: self.question_shown_at,
                    answered_at: now,
                    queries: self.queries_this_question,
                });
                if self.current_index + 1 < self.quiz.len() {
                    next.current_index += 1;
                }
                next.user_input.clear();
                next.system_output.clear();
                next.output_filtered = false;
                next.selected_choice = None;
                next.question_shown_at = now;
                next.queries_this_question = 0;
            }
        }
        Ok(next)
    }

    fn begin_query(&self, _action: &UserAction, _now: Millis) -> Result<(Self, QueryPlan), IllegalAction> {
        if !self.current().assisted {
            return Err(IllegalAction::NotReady("the assistant is not available for this question".into()));
        }
        let prompt = self.create_prompt()?;
        let mut next = self.clone();
        next.queries_this_question += 1;
        Ok((next, QueryPlan { prompt, params: decoding_params(), unit: Some(self.current_index) }))
    }

    fn show_completions(mut self, _plan: &QueryPlan, set: &CompletionSet, _now: Millis) -> Self {
        match set.completions.first() {
            Some(c) => {
                self.system_output = c.text.clone();
                self.output_filtered = c.filtered;
            }
            None => {
                self.system_output.clear();
                self.output_filtered = true;
            }
        }
        self
    }

    fn finish_allowed(&self) -> bool {
        self.is_complete()
    }

    fn completed(&self) -> Option<EndReason> {
        self.is_complete().then_some(EndReason::QuizComplete)
    }

    fn survey_units(&self, _form: &SurveyForm) -> usize {
        0
    }
}
