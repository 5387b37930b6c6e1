//! Simulated participants. A policy reads the full session state (hidden
//! fields included, so it can play a user who knows some answers) and picks
//! the next action. Output depends only on the seed and the states it has
//! been shown, so a rerun with the same seed and model reproduces a session
//! exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use interlace_core::banks::ClueCategory;
use interlace_core::survey::SurveyBank;
use interlace_core::tasks::crossword::{ChatSpeaker, CrosswordState};
use interlace_core::tasks::dialogue::DialogueState;
use interlace_core::tasks::metaphor::MetaphorState;
use interlace_core::tasks::qa::QaState;
use interlace_core::tasks::summarization::{Phase, SummarizationState};
use interlace_core::tasks::TaskLogic;
use interlace_core::trace::{ActionSource, Millis, SessionState, UserAction};
use interlace_core::TaskState;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::respond::{overlap, SurveyPlan};

/// Give up after this many decisions, whatever state the session is in.
const MAX_DECISIONS: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Reads carefully, queries more, edits more, answers every survey item.
    Diligent,
    /// Moves fast, trusts the model more and skips optional items.
    Hasty,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 2] = [PolicyKind::Diligent, PolicyKind::Hasty];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Diligent => "diligent",
            PolicyKind::Hasty => "hasty",
        }
    }

    fn profile(self) -> Profile {
        match self {
            PolicyKind::Diligent => Profile {
                think_ms: (6_000, 20_000),
                type_ms_per_char: 180,
                knows: 0.35,
                trust: 0.7,
                queries: (1, 3),
                edit_rate: 0.75,
                accept_rate: 0.55,
                query_rate: 0.7,
                turns: (11, 14),
                sentences: (4, 6),
                hasty_guess: 0.0,
                attention: 1.0,
                answers_optional: true,
            },
            PolicyKind::Hasty => Profile {
                think_ms: (2_000, 7_000),
                type_ms_per_char: 110,
                knows: 0.2,
                trust: 0.9,
                queries: (0, 2),
                edit_rate: 0.25,
                accept_rate: 0.85,
                query_rate: 0.9,
                turns: (11, 12),
                sentences: (2, 4),
                hasty_guess: 0.5,
                attention: 0.85,
                answers_optional: false,
            },
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Profile {
    pub think_ms: (Millis, Millis),
    pub type_ms_per_char: Millis,
    /// Chance of knowing an answer without help.
    pub knows: f64,
    /// Chance of going with the model's answer when it offers one.
    pub trust: f64,
    /// Range of queries per QA question or crossword clue.
    pub queries: (usize, usize),
    pub edit_rate: f64,
    pub accept_rate: f64,
    pub query_rate: f64,
    pub turns: (usize, usize),
    pub sentences: (usize, usize),
    /// Chance of filling a same-length word the model offered even if wrong.
    pub hasty_guess: f64,
    /// Chance of passing an attention check.
    pub attention: f64,
    pub answers_optional: bool,
}

/// Mixes values into a seed. SplitMix64 finalizer over a running sum.
pub(crate) fn mix(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        let mut z = acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        acc = z ^ (z >> 31);
    }
    acc
}

fn tag(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

#[derive(Debug, Default)]
struct CrosswordMemo {
    target: Option<usize>,
    attempts: BTreeMap<usize, usize>,
    given_up: BTreeSet<usize>,
    /// Answer the user has settled on for the target clue.
    fill: Option<String>,
    awaiting_reply: bool,
    passes: usize,
}

#[derive(Debug, Default)]
struct Memo {
    crossword: CrosswordMemo,
    /// Document index whose draft has already been edited.
    summary_edited: Option<usize>,
    sentence_edited: bool,
    sentence_queries: usize,
    /// Model outputs seen for the current quiz question.
    qa_outputs: (usize, Vec<String>),
    survey_attempts: BTreeMap<(String, Option<usize>), usize>,
    /// Timestamp of the last action sent. A failed model call leaves the
    /// session clock behind it.
    last_at: Millis,
}

/// A simulated participant driving one session.
pub struct SimulatedUser<'a> {
    kind: PolicyKind,
    profile: Profile,
    seed: u64,
    decisions: u64,
    surveys: &'a SurveyBank,
    memo: Memo,
}

impl<'a> SimulatedUser<'a> {
    pub fn new(kind: PolicyKind, seed: u64, surveys: &'a SurveyBank) -> Self {
        Self { kind, profile: kind.profile(), seed, decisions: 0, surveys, memo: Memo::default() }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Randomness for timing and other per-decision noise.
    fn step_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(&[self.seed, tag("step"), self.decisions]))
    }

    /// Randomness tied to content (which question, which attempt), so the
    /// same choice is made however many times the state is revisited.
    fn content_rng(&self, what: &str, a: u64, b: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(&[self.seed, tag(what), a, b]))
    }

    fn chance(&self, what: &str, a: u64, b: u64, p: f64) -> bool {
        self.content_rng(what, a, b).random_bool(p.clamp(0.0, 1.0))
    }

    fn range(&self, what: &str, a: u64, (lo, hi): (usize, usize)) -> usize {
        self.content_rng(what, a, 0).random_range(lo..=hi)
    }

    fn now(&self, state: &SessionState) -> Millis {
        state.clock.max(self.memo.last_at)
    }

    fn think(&self, state: &SessionState) -> Millis {
        let (lo, hi) = self.profile.think_ms;
        self.now(state) + self.step_rng().random_range(lo..=hi)
    }

    fn typing(&self, state: &SessionState, text: &str) -> Millis {
        self.think(state) + self.profile.type_ms_per_char * text.chars().count() as Millis / 4
    }

    fn type_text(&self, state: &SessionState, field: &str, text: String) -> UserAction {
        let at = self.typing(state, &text);
        UserAction::type_text(field, text, at)
    }

    fn click(&self, state: &SessionState, button: &str) -> UserAction {
        UserAction::click(button, self.think(state))
    }

    fn decide(&mut self, state: &SessionState) -> Option<UserAction> {
        if state.is_ended() {
            return self.survey_action(state);
        }
        match &state.task {
            TaskState::Dialogue(s) => Some(self.dialogue(state, s)),
            TaskState::Qa(s) => Some(self.qa(state, s)),
            TaskState::Crossword(s) => Some(self.crossword(state, s)),
            TaskState::Summarization(s) => Some(self.summarization(state, s)),
            TaskState::Metaphor(s) => Some(self.metaphor(state, s)),
        }
    }

    fn survey_action(&mut self, state: &SessionState) -> Option<UserAction> {
        let plan = SurveyPlan::new(self.surveys, state);
        let mut rng = self.content_rng("survey", 0, 0);
        for (form, unit) in plan.pending(state) {
            let key = (form.id.clone(), unit);
            let tries = self.memo.survey_attempts.entry(key).or_insert(0);
            if *tries >= 2 {
                continue;
            }
            *tries += 1;
            let submission = plan.fill(form, unit, &self.profile, &mut rng);
            let at = self.think(state);
            return Some(UserAction::survey(submission, at));
        }
        None
    }

    fn dialogue(&self, state: &SessionState, s: &DialogueState) -> UserAction {
        let target = self.range("turns", 0, self.profile.turns);
        if s.finish_allowed() && s.turn_count >= target {
            return UserAction::finish(self.think(state));
        }
        if s.user_input.trim().is_empty() {
            let text = self.utterance(s);
            return self.type_text(state, "user_input", text);
        }
        self.click(state, "send")
    }

    fn utterance(&self, s: &DialogueState) -> String {
        let mut rng = self.content_rng("utterance", s.turn_count as u64, 0);
        let topics: Vec<&str> = s
            .scenario
            .text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| w.len() > 4)
            .collect();
        let topic = topics.choose(&mut rng).copied().unwrap_or("that").to_lowercase();
        let last_bot = s.dialogue_history.last().map(|t| t.text.as_str()).unwrap_or("");
        let echo: Vec<&str> = last_bot.split_whitespace().filter(|w| w.len() > 3).collect();
        let echo = echo.choose(&mut rng).copied().unwrap_or("it").trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        let templates: &[&str] = match self.kind {
            PolicyKind::Diligent => &[
                "I have been thinking a lot about {topic} lately, what would you do?",
                "That makes sense. Why do you say {echo} though?",
                "Honestly {topic} is what keeps me up at night. Any advice?",
                "Interesting point about {echo}. I never looked at it that way.",
                "My friends say I worry too much about {topic}. Do you agree?",
                "Can you tell me more about {echo}? I would like to understand.",
                "I tried talking to my family about {topic} but it did not go well.",
            ],
            PolicyKind::Hasty => &["ok", "lol why {echo}", "{topic}?", "cool", "sure", "and {echo}?", "haha yes", "hmm {topic}"],
        };
        let t = templates.choose(&mut rng).expect("templates are non-empty");
        t.replace("{topic}", &topic).replace("{echo}", &echo)
    }

    fn qa(&mut self, state: &SessionState, s: &QaState) -> UserAction {
        if self.memo.qa_outputs.0 != s.current_index {
            self.memo.qa_outputs = (s.current_index, Vec::new());
        }
        let seen = &mut self.memo.qa_outputs.1;
        if !s.system_output.is_empty() && seen.last() != Some(&s.system_output) {
            seen.push(s.system_output.clone());
        }
        let idx = s.current_index as u64;
        let item = s.current();
        let wanted = if item.assisted { self.range("qa-queries", idx, self.profile.queries) } else { 0 };
        if s.selected_choice.is_none() && s.queries_this_question < wanted {
            let prompt = self.qa_prompt(s, s.queries_this_question);
            if s.user_input != prompt {
                return self.type_text(state, "user_input", prompt);
            }
            return self.click(state, "generate");
        }
        if s.selected_choice.is_none() {
            let choice = self.qa_choice(s);
            return UserAction::select("choice", choice, self.think(state));
        }
        self.click(state, "next")
    }

    fn qa_prompt(&self, s: &QaState, attempt: usize) -> String {
        let q = &s.current().question;
        let mut rng = self.content_rng("qa-prompt", s.current_index as u64, attempt as u64);
        let style = match self.kind {
            PolicyKind::Diligent => rng.random_range(0..4),
            PolicyKind::Hasty => [0, 2, 2, 3][rng.random_range(0..4)],
        };
        match style {
            0 => q.text.clone(),
            1 => format!("{} Explain briefly.", q.text.trim_end_matches('?')),
            2 => {
                let words: Vec<&str> = q.text.split_whitespace().filter(|w| w.len() > 4).take(3).collect();
                if words.is_empty() { q.text.clone() } else { words.join(" ") }
            }
            _ => {
                let picks: Vec<&String> = q.choices.iter().take(2).collect();
                match picks.as_slice() {
                    [a, b] => format!("Is it {a} or {b}?"),
                    _ => q.text.clone(),
                }
            }
        }
    }

    fn qa_choice(&self, s: &QaState) -> usize {
        let idx = s.current_index as u64;
        let item = s.current();
        let q = &item.question;
        let mut rng = self.content_rng("qa-choice", idx, 0);
        if item.is_attention_check {
            return if rng.random_bool(self.profile.attention) { q.gold } else { (q.gold + 1) % q.choices.len() };
        }
        if self.chance("qa-know", idx, 0, self.profile.knows) {
            return q.gold;
        }
        // The earliest choice named by any output seen for this question.
        let offered = self.memo.qa_outputs.1.iter().find_map(|out| {
            q.choices
                .iter()
                .enumerate()
                .filter_map(|(i, c)| find_token(out, c).map(|at| (at, i)))
                .min()
                .map(|(_, i)| i)
        });
        match offered {
            Some(i) if rng.random_bool(self.profile.trust) => i,
            _ => rng.random_range(0..q.choices.len()),
        }
    }

    fn crossword(&mut self, state: &SessionState, s: &CrosswordState) -> UserAction {
        let elapsed = state.elapsed();
        if self.kind == PolicyKind::Hasty && elapsed > 12 * 60 * 1000 {
            return UserAction::finish(self.think(state));
        }
        // Read the model's reply to the last question.
        if self.memo.crossword.awaiting_reply {
            if let Some(target) = self.memo.crossword.target {
                if s.chat_history.last().is_some_and(|m| m.speaker == ChatSpeaker::Ai) {
                    self.memo.crossword.awaiting_reply = false;
                    let reply = s.chat_history.last().map(|m| m.text.clone()).unwrap_or_default();
                    self.memo.crossword.fill = self.read_reply(s, target, &reply);
                }
            }
        }
        let target = match self.memo.crossword.target {
            Some(t) if !s.clue_solved(&s.clues[t]) && !self.memo.crossword.given_up.contains(&t) => t,
            _ => match self.next_clue(s) {
                Some(t) => {
                    self.memo.crossword.target = Some(t);
                    self.memo.crossword.fill = None;
                    self.memo.crossword.awaiting_reply = false;
                    t
                }
                None => return UserAction::finish(self.think(state)),
            },
        };
        if s.selected_clue != Some(target) {
            return UserAction::select("selected_clue", target, self.think(state));
        }
        let clue = &s.clues[target];
        if self.memo.crossword.fill.is_none() {
            let attempts = self.memo.crossword.attempts.get(&target).copied().unwrap_or(0);
            let know_p = self.profile.knows + category_ease(clue.category);
            if attempts == 0 && self.chance("cw-know", target as u64, self.memo.crossword.passes as u64, know_p) {
                self.memo.crossword.fill = Some(clue.answer.clone());
            } else if attempts < self.profile.queries.1.max(1) {
                let prompt = self.clue_prompt(s, target, attempts);
                if s.user_input != prompt {
                    return self.type_text(state, "user_input", prompt);
                }
                *self.memo.crossword.attempts.entry(target).or_insert(0) += 1;
                self.memo.crossword.awaiting_reply = true;
                return self.click(state, "send");
            } else {
                self.memo.crossword.given_up.insert(target);
                self.memo.crossword.target = None;
                return self.crossword_idle(state);
            }
        }
        let fill: Vec<char> = self.memo.crossword.fill.clone().unwrap_or_default().chars().collect();
        for (k, &(r, c)) in clue.cells.iter().enumerate() {
            let want = fill.get(k).copied();
            if want.is_some() && s.letters[r][c] != want {
                let at = self.now(state) + self.step_rng().random_range(800..=2_500);
                return UserAction::enter_letter(r, c, want, at);
            }
        }
        // Filled in but wrong somewhere: count it as a miss and move on.
        self.memo.crossword.given_up.insert(target);
        self.memo.crossword.target = None;
        self.crossword_idle(state)
    }

    /// Something harmless to do while switching clues.
    fn crossword_idle(&self, state: &SessionState) -> UserAction {
        UserAction::telemetry("scan_grid", self.think(state))
    }

    fn next_clue(&mut self, s: &CrosswordState) -> Option<usize> {
        let open = |m: &CrosswordMemo, i: usize| !s.clue_solved(&s.clues[i]) && !m.given_up.contains(&i);
        if let Some(i) = (0..s.clues.len()).find(|&i| open(&self.memo.crossword, i)) {
            return Some(i);
        }
        // A careful solver takes a second pass over the clues it skipped.
        if self.kind == PolicyKind::Diligent && self.memo.crossword.passes == 0 {
            self.memo.crossword.passes = 1;
            self.memo.crossword.given_up.clear();
            self.memo.crossword.attempts.clear();
            return (0..s.clues.len()).find(|&i| open(&self.memo.crossword, i));
        }
        None
    }

    fn clue_prompt(&self, s: &CrosswordState, target: usize, attempt: usize) -> String {
        let clue = &s.clues[target];
        let len = clue.cells.len();
        let mut rng = self.content_rng("cw-prompt", target as u64, (attempt + 10 * self.memo.crossword.passes) as u64);
        match rng.random_range(0..4) {
            0 => clue.text.clone(),
            1 => format!("What is a {len} letter word for {}?", clue.text.trim_end_matches('.')),
            2 => format!("{} ({len})", clue.text),
            _ => format!("Help with {}: {}", clue.label(), clue.text),
        }
    }

    fn read_reply(&self, s: &CrosswordState, target: usize, reply: &str) -> Option<String> {
        let clue = &s.clues[target];
        let words: Vec<String> = reply
            .split(|c: char| !c.is_ascii_alphabetic())
            .filter(|w| !w.is_empty())
            .map(|w| w.to_ascii_uppercase())
            .collect();
        if words.iter().any(|w| *w == clue.answer) {
            return Some(clue.answer.clone());
        }
        let attempts = self.memo.crossword.attempts.get(&target).copied().unwrap_or(0) as u64;
        let same_len = words.iter().find(|w| w.len() == clue.cells.len())?;
        self.chance("cw-guess", target as u64, attempts, self.profile.hasty_guess).then(|| same_len.clone())
    }

    fn summarization(&mut self, state: &SessionState, s: &SummarizationState) -> UserAction {
        match s.phase {
            Phase::AwaitingStart => self.click(state, "start"),
            Phase::Editing => {
                let idx = s.current_index;
                if self.memo.summary_edited != Some(idx) {
                    self.memo.summary_edited = Some(idx);
                    if let Some(text) = self.edit_summary(s) {
                        return self.type_text(state, "edited_summary", text);
                    }
                }
                self.click(state, "next")
            }
            Phase::Done => UserAction::finish(self.think(state)),
        }
    }

    fn edit_summary(&self, s: &SummarizationState) -> Option<String> {
        let idx = s.current_index as u64;
        let doc = s.current_document().map(|d| d.text.as_str()).unwrap_or("");
        let doc_words: Vec<&str> = doc.split_whitespace().collect();
        if s.empty_completion || s.model_summary.trim().is_empty() {
            let n = self.range("sum-own", idx, (12, 20)).min(doc_words.len());
            let mut own = doc_words[..n].join(" ");
            own = own.trim_end_matches(|c: char| !c.is_alphanumeric()).to_string();
            own.push('.');
            return Some(own);
        }
        // Drafts that stray from the document get edited more often.
        let stray = 1.0 - overlap(&s.model_summary, doc);
        if !self.chance("sum-edit", idx, 0, self.profile.edit_rate * (0.6 + stray)) {
            return None;
        }
        let mut rng = self.content_rng("sum-ops", idx, 0);
        let mut words: Vec<String> = s.model_summary.trim_end_matches('.').split_whitespace().map(String::from).collect();
        let ops = match self.kind {
            PolicyKind::Diligent => rng.random_range(1..=3),
            PolicyKind::Hasty => 1,
        };
        for _ in 0..ops {
            match rng.random_range(0..3) {
                0 if words.len() > 6 => {
                    let keep = words.len() * 4 / 5;
                    words.truncate(keep);
                }
                1 if !doc_words.is_empty() => {
                    let start = rng.random_range(0..doc_words.len());
                    let span = rng.random_range(2..=4);
                    words.extend(doc_words[start..].iter().take(span).map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_string()));
                }
                _ if !words.is_empty() && !doc_words.is_empty() => {
                    let at = rng.random_range(0..words.len());
                    let w = doc_words.choose(&mut rng).expect("non-empty");
                    words[at] = w.trim_matches(|c: char| !c.is_alphanumeric()).to_string();
                }
                _ => {}
            }
        }
        words.retain(|w| !w.is_empty());
        let mut text = words.join(" ");
        text.push('.');
        Some(text)
    }

    fn metaphor(&mut self, state: &SessionState, s: &MetaphorState) -> UserAction {
        let target = self.range("sentences", 0, self.profile.sentences);
        let idx = s.sentences.len() as u64;
        if s.sentences.len() >= target && s.user_input.is_empty() && s.suggestions.is_none() {
            return UserAction::finish(self.think(state));
        }
        if s.suggestions.is_some() {
            let shown = s.displayed();
            let q = self.memo.sentence_queries as u64;
            let best = shown
                .iter()
                .enumerate()
                .map(|(i, text)| (suggestion_quality(text, &s.seed_metaphor), i))
                .fold(None, |acc: Option<(f64, usize)>, x| match acc {
                    Some(a) if a.0 >= x.0 => Some(a),
                    _ => Some(x),
                });
            if let Some((quality, pick)) = best {
                if self.chance("mp-accept", idx, q, self.profile.accept_rate * quality) {
                    return UserAction::select("suggestions", pick, self.think(state));
                }
            }
            return self.click(state, "dismiss");
        }
        if s.user_input.trim().is_empty() {
            let q = self.memo.sentence_queries;
            if q < 2 && self.chance("mp-query", idx, q as u64, if q == 0 { self.profile.query_rate } else { 0.4 }) {
                self.memo.sentence_queries += 1;
                return self.click(state, "get_suggestions");
            }
            let text = self.own_sentence(&s.seed_metaphor, idx);
            return self.type_text(state, "user_input", text);
        }
        if !self.memo.sentence_edited {
            self.memo.sentence_edited = true;
            if self.chance("mp-edit", idx, 0, self.profile.edit_rate) {
                let text = self.edit_sentence(&s.user_input, idx);
                return self.type_text(state, "user_input", text);
            }
        }
        self.memo.sentence_edited = false;
        self.memo.sentence_queries = 0;
        self.click(state, "submit")
    }

    fn own_sentence(&self, seed: &str, idx: u64) -> String {
        let seed = seed.trim().trim_end_matches('.');
        let (tenor, vehicle) = seed.split_once(" is ").unwrap_or((seed, "a puzzle"));
        let vehicle = vehicle.trim_start_matches("a ").trim_start_matches("an ").trim_start_matches("the ");
        let mut rng = self.content_rng("mp-own", idx, 0);
        let templates = [
            "My {t} has become a {v} I cannot put down.",
            "Every morning the {t} feels like a {v} waiting for me.",
            "She carried her {t} the way you carry a {v}.",
            "Our {t} was a {v} nobody wanted to admit.",
            "The {t} turned into a {v} overnight.",
        ];
        let t = templates.choose(&mut rng).expect("non-empty");
        t.replace("{t}", &tenor.to_lowercase()).replace("{v}", &vehicle.to_lowercase())
    }

    fn edit_sentence(&self, text: &str, idx: u64) -> String {
        let mut rng = self.content_rng("mp-edit-op", idx, 0);
        let base = text.trim().trim_end_matches('.');
        let tails = [" again", " every single day", " without warning", " and I loved it"];
        match rng.random_range(0..2) {
            0 => format!("{base}{}.", tails.choose(&mut rng).expect("non-empty")),
            _ => {
                let words: Vec<&str> = base.split_whitespace().collect();
                if words.len() > 4 {
                    format!("{}.", words[..words.len() - 1].join(" "))
                } else {
                    format!("Honestly, {base}.")
                }
            }
        }
    }
}

/// How usable a suggested sentence looks: a sensible length, few repeated
/// words and some link to the metaphor.
fn suggestion_quality(text: &str, seed: &str) -> f64 {
    let words: Vec<String> = text.split_whitespace().map(|w| w.to_lowercase()).collect();
    if words.is_empty() {
        return 0.0;
    }
    let distinct = words.iter().collect::<BTreeSet<_>>().len() as f64 / words.len() as f64;
    let length = if (5..=25).contains(&words.len()) { 1.0 } else { 0.5 };
    let linked = if overlap(seed, text) > 0.0 { 1.0 } else { 0.6 };
    (distinct * length * linked).clamp(0.0, 1.0)
}

/// Byte offset of `needle` in `haystack`, ignoring case, where it is not
/// glued to surrounding letters or digits.
fn find_token(haystack: &str, needle: &str) -> Option<usize> {
    let hay = haystack.to_lowercase();
    let needle = needle.to_lowercase();
    if needle.is_empty() {
        return None;
    }
    let mut from = 0;
    while let Some(pos) = hay[from..].find(&needle) {
        let at = from + pos;
        let end = at + needle.len();
        let before = hay[..at].chars().next_back().is_some_and(char::is_alphanumeric);
        let after = hay[end..].chars().next().is_some_and(char::is_alphanumeric);
        if !before && !after {
            return Some(at);
        }
        from = at + needle.chars().next().map_or(1, char::len_utf8);
    }
    None
}

fn category_ease(c: ClueCategory) -> f64 {
    match c {
        ClueCategory::Definition => 0.15,
        ClueCategory::Commonsense | ClueCategory::Phrase => 0.1,
        ClueCategory::Knowledge => 0.0,
        ClueCategory::Wordplay | ClueCategory::CrossReference => -0.1,
    }
}

impl ActionSource for SimulatedUser<'_> {
    fn next_action(&mut self, state: &SessionState) -> Option<UserAction> {
        if self.decisions >= MAX_DECISIONS {
            return None;
        }
        let action = self.decide(state);
        self.decisions += 1;
        if let Some(a) = &action {
            self.memo.last_at = a.timestamp;
        }
        action
    }
}
