//! Task content banks: dialogue scenarios and example dialogues, quiz
//! questions, crossword puzzles, documents and metaphor seeds.
//!
//! A small set is bundled with the crate. [`TaskBanks::load_dir`] reads
//! replacements from a directory holding files with the same names.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BankError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid bank {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Empathetic,
    Commonsense,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub dataset: Dataset,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizQuestion {
    pub id: String,
    pub subject: String,
    pub text: String,
    pub choices: Vec<String>,
    pub gold: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizBank {
    /// Worked example shown in the instructions, never quizzed.
    pub example: QuizQuestion,
    pub attention_check: QuizQuestion,
    pub pool: Vec<QuizQuestion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Across,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClueCategory {
    Knowledge,
    Definition,
    Commonsense,
    Phrase,
    Wordplay,
    CrossReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClueSpec {
    pub number: u32,
    pub direction: Direction,
    pub text: String,
    pub answer: String,
    pub category: ClueCategory,
}

/// A puzzle's solution grid, one string per row with `#` for black cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Puzzle {
    pub id: String,
    pub rows: Vec<String>,
    pub clues: Vec<ClueSpec>,
}

impl Puzzle {
    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.chars().count())
    }

    pub fn solution(&self, row: usize, col: usize) -> Option<char> {
        self.rows
            .get(row)
            .and_then(|r| r.chars().nth(col))
            .filter(|c| *c != '#')
    }

    /// Computes standard crossword numbering: a cell gets a number when it
    /// starts an across or down entry of length at least two.
    pub fn numbering(&self) -> Vec<(u32, usize, usize)> {
        let mut out = Vec::new();
        let mut n = 0;
        for r in 0..self.height() {
            for c in 0..self.width() {
                if self.solution(r, c).is_none() {
                    continue;
                }
                let starts_across = (c == 0 || self.solution(r, c - 1).is_none())
                    && self.solution(r, c + 1).is_some();
                let starts_down = (r == 0 || self.solution(r - 1, c).is_none())
                    && self.solution(r + 1, c).is_some();
                if starts_across || starts_down {
                    n += 1;
                    out.push((n, r, c));
                }
            }
        }
        out
    }

    /// Cells covered by a clue, in reading order.
    pub fn cells(&self, clue: &ClueSpec) -> Vec<(usize, usize)> {
        let Some(&(_, r0, c0)) = self.numbering().iter().find(|(n, _, _)| *n == clue.number) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let (mut r, mut c) = (r0, c0);
        while self.solution(r, c).is_some() {
            out.push((r, c));
            match clue.direction {
                Direction::Across => c += 1,
                Direction::Down => r += 1,
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        let w = self.width();
        if w == 0 || self.rows.iter().any(|r| r.chars().count() != w) {
            return Err(format!("puzzle {} has ragged or empty rows", self.id));
        }
        for clue in &self.clues {
            let cells = self.cells(clue);
            let word: String = cells.iter().filter_map(|&(r, c)| self.solution(r, c)).collect();
            if !word.eq_ignore_ascii_case(&clue.answer) {
                return Err(format!(
                    "puzzle {} clue {}{:?}: grid spells {word:?}, answer is {:?}",
                    self.id, clue.number, clue.direction, clue.answer
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaphorSeed {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBanks {
    pub scenarios: Vec<Scenario>,
    pub dialogue_examples: Vec<Vec<Turn>>,
    pub quiz: QuizBank,
    pub puzzles: Vec<Puzzle>,
    pub documents: Vec<Document>,
    pub metaphors: Vec<MetaphorSeed>,
}

const FILES: [&str; 6] = [
    "scenarios.json",
    "dialogue_examples.json",
    "quiz.json",
    "puzzles.json",
    "documents.json",
    "metaphors.json",
];

fn parse<T: serde::de::DeserializeOwned>(path: &str, text: &str) -> Result<T, BankError> {
    serde_json::from_str(text).map_err(|source| BankError::Parse { path: path.to_string(), source })
}

impl TaskBanks {
    pub fn bundled() -> Self {
        let banks = Self {
            scenarios: parse(FILES[0], include_str!("../data/scenarios.json")).expect("bundled"),
            dialogue_examples: parse(FILES[1], include_str!("../data/dialogue_examples.json"))
                .expect("bundled"),
            quiz: parse(FILES[2], include_str!("../data/quiz.json")).expect("bundled"),
            puzzles: parse(FILES[3], include_str!("../data/puzzles.json")).expect("bundled"),
            documents: parse(FILES[4], include_str!("../data/documents.json")).expect("bundled"),
            metaphors: parse(FILES[5], include_str!("../data/metaphors.json")).expect("bundled"),
        };
        banks.validate().expect("bundled banks are valid");
        banks
    }

    /// Starts from the bundled banks and replaces each one for which `dir`
    /// holds a file of the same name.
    pub fn load_dir(dir: &Path) -> Result<Self, BankError> {
        let mut banks = Self::bundled();
        for name in FILES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let shown = path.display().to_string();
            let text = std::fs::read_to_string(&path)
                .map_err(|source| BankError::Io { path: shown.clone(), source })?;
            match name {
                "scenarios.json" => banks.scenarios = parse(&shown, &text)?,
                "dialogue_examples.json" => banks.dialogue_examples = parse(&shown, &text)?,
                "quiz.json" => banks.quiz = parse(&shown, &text)?,
                "puzzles.json" => banks.puzzles = parse(&shown, &text)?,
                "documents.json" => banks.documents = parse(&shown, &text)?,
                _ => banks.metaphors = parse(&shown, &text)?,
            }
        }
        banks.validate()?;
        Ok(banks)
    }

    pub fn validate(&self) -> Result<(), BankError> {
        let invalid = |name, reason: String| Err(BankError::Invalid { name, reason });
        if self.scenarios.is_empty() {
            return invalid("scenarios", "no scenarios".into());
        }
        if self.quiz.pool.len() < crate::tasks::qa::QUIZ_POOL_DRAW {
            return invalid(
                "quiz",
                format!("pool has {} questions, need {}", self.quiz.pool.len(), crate::tasks::qa::QUIZ_POOL_DRAW),
            );
        }
        for q in self.quiz.pool.iter().chain([&self.quiz.attention_check, &self.quiz.example]) {
            if q.choices.len() != 4 || q.gold >= 4 {
                return invalid("quiz", format!("question {} needs 4 choices and a gold index", q.id));
            }
        }
        if self.puzzles.is_empty() {
            return invalid("puzzles", "no puzzles".into());
        }
        for p in &self.puzzles {
            p.validate().or_else(|reason| invalid("puzzles", reason))?;
        }
        if self.documents.len() < crate::tasks::summarization::DOCUMENTS_PER_SESSION {
            return invalid("documents", format!("only {} documents", self.documents.len()));
        }
        if self.metaphors.is_empty() {
            return invalid("metaphors", "no seeds".into());
        }
        Ok(())
    }
}
