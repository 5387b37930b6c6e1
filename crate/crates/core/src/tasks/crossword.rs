//! Crossword solving with an AI teammate in a side chat. Only the latest
//! chat message is sent to the LM; the chat history is display-only.

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{choice_payload, field, is_button, not_in_schema, target, text_payload, QueryPlan, TaskLogic, Transition};
use crate::banks::{ClueCategory, Direction, Puzzle, TaskBanks};
use crate::lm::{CompletionSet, DecodingParams};
use crate::survey::SurveyForm;
use crate::trace::{ActionKind, EndReason, Fields, IllegalAction, Millis, Payload, UserAction};

pub const TIME_LIMIT_MS: Millis = 30 * 60 * 1000;

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
pub struct Clue {
    pub number: u32,
    pub direction: Direction,
    pub text: String,
    pub answer: String,
    pub category: ClueCategory,
    pub cells: Vec<(usize, usize)>,
}

impl Clue {
    pub fn label(&self) -> String {
        let d = match self.direction {
            Direction::Across => "across",
            Direction::Down => "down",
        };
        format!("{}-{d}", self.number)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChatSpeaker {
    You,
    #[serde(rename = "AI")]
    Ai,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub speaker: ChatSpeaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosswordState {
    pub puzzle_id: String,
    /// Solution rows with `#` for black cells.
    pub solution: Vec<String>,
    /// The user's letters; `None` for empty slots and black cells alike.
    pub letters: Vec<Vec<Option<char>>>,
    pub clues: Vec<Clue>,
    pub selected_clue: Option<usize>,
    pub chat_history: Vec<ChatMessage>,
    pub user_input: String,
    pub started_at: Millis,
    pub flagged_messages: Vec<usize>,
}

impl CrosswordState {
    pub fn new(banks: &TaskBanks, rng: &mut ChaCha8Rng, now: Millis) -> Self {
        let puzzle = banks.puzzles.choose(rng).expect("puzzle bank is non-empty");
        Self::from_puzzle(puzzle, now)
    }

    pub fn from_puzzle(puzzle: &Puzzle, now: Millis) -> Self {
        let clues = puzzle
            .clues
            .iter()
            .map(|c| Clue {
                number: c.number,
                direction: c.direction,
                text: c.text.clone(),
                answer: c.answer.to_uppercase(),
                category: c.category,
                cells: puzzle.cells(c),
            })
            .collect();
        Self {
            puzzle_id: puzzle.id.clone(),
            solution: puzzle.rows.iter().map(|r| r.to_uppercase()).collect(),
            letters: vec![vec![None; puzzle.width()]; puzzle.height()],
            clues,
            selected_clue: None,
            chat_history: Vec::new(),
            user_input: String::new(),
            started_at: now,
            flagged_messages: Vec::new(),
        }
    }

    pub fn solution_at(&self, row: usize, col: usize) -> Option<char> {
        self.solution.get(row).and_then(|r| r.chars().nth(col)).filter(|c| *c != '#')
    }

    pub fn is_correct(&self, row: usize, col: usize) -> bool {
        match (self.solution_at(row, col), self.letters.get(row).and_then(|r| r.get(col)).copied().flatten()) {
            (Some(want), Some(got)) => want.eq_ignore_ascii_case(&got),
            _ => false,
        }
    }

    pub fn letter_slots(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.solution.len())
            .flat_map(move |r| (0..self.letters[r].len()).map(move |c| (r, c)))
            .filter(|&(r, c)| self.solution_at(r, c).is_some())
    }

    pub fn clue_solved(&self, clue: &Clue) -> bool {
        !clue.cells.is_empty() && clue.cells.iter().all(|&(r, c)| self.is_correct(r, c))
    }

    pub fn is_solved(&self) -> bool {
        self.letter_slots().all(|(r, c)| self.is_correct(r, c))
    }

    /// The latest chat message, unchanged.
    pub fn create_prompt(&self) -> Result<String, IllegalAction> {
        if self.user_input.trim().is_empty() {
            return Err(IllegalAction::EmptyInput);
        }
        Ok(self.user_input.clone())
    }

    fn visible_grid(&self) -> Vec<Vec<String>> {
        (0..self.solution.len())
            .map(|r| {
                (0..self.letters[r].len())
                    .map(|c| match self.solution_at(r, c) {
                        None => "#".to_string(),
                        Some(_) => self.letters[r][c].map(String::from).unwrap_or_default(),
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Serialize)]
struct VisibleClue<'a> {
    id: String,
    number: u32,
    direction: Direction,
    text: &'a str,
    length: usize,
}

impl TaskLogic for CrosswordState {
    fn visible(&self) -> Fields {
        let clues: Vec<VisibleClue> = self
            .clues
            .iter()
            .map(|c| VisibleClue { id: c.label(), number: c.number, direction: c.direction, text: &c.text, length: c.cells.len() })
            .collect();
        Fields::from([
            ("grid".into(), field(self.visible_grid())),
            ("clues".into(), field(clues)),
            ("selected_clue".into(), field(self.selected_clue)),
            ("chat_history".into(), field(&self.chat_history)),
            ("user_input".into(), field(&self.user_input)),
            ("started_at".into(), field(self.started_at)),
            ("time_limit_ms".into(), field(TIME_LIMIT_MS)),
        ])
    }

    fn hidden(&self) -> Fields {
        Fields::from([
            ("puzzle_id".into(), field(&self.puzzle_id)),
            ("solution".into(), field(&self.solution)),
            ("answers".into(), field(self.clues.iter().map(|c| (c.label(), &c.answer, c.category)).collect::<Vec<_>>())),
            ("flagged_messages".into(), field(&self.flagged_messages)),
        ])
    }

    fn route(&self, action: &UserAction) -> Result<Transition, IllegalAction> {
        match action.kind {
            ActionKind::TypeText if target(action) == "user_input" => Ok(Transition::Update),
            ActionKind::SelectOption if target(action) == "selected_clue" => Ok(Transition::Update),
            ActionKind::EnterLetter => Ok(Transition::Update),
            ActionKind::ClickButton if is_button(action, "send") => Ok(Transition::Query),
            _ => Err(not_in_schema(action)),
        }
    }

    fn update(&self, action: &UserAction, _now: Millis) -> Result<Self, IllegalAction> {
        let mut next = self.clone();
        match action.kind {
            ActionKind::TypeText => next.user_input = text_payload(action)?.to_string(),
            ActionKind::SelectOption => {
                let i = choice_payload(action)?;
                if i >= self.clues.len() {
                    return Err(IllegalAction::BadPayload(format!("clue {i} out of range")));
                }
                next.selected_clue = Some(i);
            }
            _ => {
                let Some(Payload::Letter { row, col, letter }) = action.payload else {
                    return Err(IllegalAction::BadPayload("expected a letter and cell".into()));
                };
                if self.solution_at(row, col).is_none() {
                    return Err(IllegalAction::BadPayload(format!("cell ({row}, {col}) takes no letter")));
                }
                let letter = match letter {
                    Some(ch) if ch.is_ascii_alphabetic() => Some(ch.to_ascii_uppercase()),
                    Some(ch) => return Err(IllegalAction::BadPayload(format!("{ch:?} is not a letter"))),
                    None => None,
                };
                next.letters[row][col] = letter;
            }
        }
        Ok(next)
    }

    fn begin_query(&self, _action: &UserAction, _now: Millis) -> Result<(Self, QueryPlan), IllegalAction> {
        let prompt = self.create_prompt()?;
        let mut next = self.clone();
        next.chat_history.push(ChatMessage { speaker: ChatSpeaker::You, text: prompt.clone() });
        next.user_input.clear();
        Ok((next, QueryPlan { prompt, params: decoding_params(), unit: self.selected_clue }))
    }

    fn show_completions(mut self, _plan: &QueryPlan, set: &CompletionSet, _now: Millis) -> Self {
        let (text, flagged) = match set.completions.first() {
            Some(c) => (c.text.trim().to_string(), c.filtered),
            None => (String::new(), true),
        };
        if flagged {
            self.flagged_messages.push(self.chat_history.len());
        }
        self.chat_history.push(ChatMessage { speaker: ChatSpeaker::Ai, text });
        self
    }

    fn finish_allowed(&self) -> bool {
        true
    }

    fn completed(&self) -> Option<EndReason> {
        self.is_solved().then_some(EndReason::Solved)
    }

    fn time_limit(&self) -> Option<Millis> {
        Some(TIME_LIMIT_MS)
    }

    fn survey_units(&self, _form: &SurveyForm) -> usize {
        0
    }
}
