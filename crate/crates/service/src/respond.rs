//! How simulated participants and evaluators fill in survey forms. Answers
//! follow a rough quality estimate of what they saw, plus noise.

use std::collections::BTreeSet;

use interlace_core::banks::Speaker;
use interlace_core::dims::Perspective;
use interlace_core::survey::{
    Answer, FormScope, ItemResponse, Respondent, Scale, SurveyBank, SurveyForm, SurveyItem, SurveySubmission, UnitKind,
};
use interlace_core::trace::SessionState;
use interlace_core::TaskState;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::policy::Profile;

pub const EVALUATOR_ID: &str = "evaluator-1";

const COMMENTS: &[&str] = &[
    "It was fine overall.",
    "Some answers were off topic.",
    "It helped when I was stuck.",
    "I would like shorter responses.",
    "Hard to tell when it was right.",
];

/// Forms a finished session still owes, in the order they are submitted:
/// first-person forms before third-party ones.
pub(crate) struct SurveyPlan<'a> {
    state: &'a SessionState,
    forms: Vec<(&'a SurveyForm, Option<usize>)>,
}

impl<'a> SurveyPlan<'a> {
    pub fn new(bank: &'a SurveyBank, state: &'a SessionState) -> Self {
        let mut forms = Vec::new();
        for perspective in [Perspective::FirstPerson, Perspective::ThirdParty] {
            for form in bank.forms_for(state.task_kind).filter(|f| f.perspective == perspective) {
                match form.scope {
                    FormScope::Session => forms.push((form, None)),
                    FormScope::Unit => {
                        forms.extend((0..state.task.survey_units(form)).map(|u| (form, Some(u))));
                    }
                }
            }
        }
        Self { state, forms }
    }

    pub fn pending(&self, state: &SessionState) -> Vec<(&'a SurveyForm, Option<usize>)> {
        let done: BTreeSet<(&str, Option<usize>)> = state.surveys.iter().map(|s| (s.form.as_str(), s.unit)).collect();
        self.forms.iter().copied().filter(|(f, u)| !done.contains(&(f.id.as_str(), *u))).collect()
    }

    pub fn fill(
        &self,
        form: &SurveyForm,
        unit: Option<usize>,
        profile: &Profile,
        rng: &mut ChaCha8Rng,
    ) -> SurveySubmission {
        let respondent = match form.perspective {
            Perspective::FirstPerson => Respondent::FirstPerson,
            Perspective::ThirdParty => Respondent::ThirdParty { evaluator_id: EVALUATOR_ID.to_string() },
        };
        let dataset = self.state.task.dataset();
        let units = self.state.task.survey_units(form);
        let responses = form
            .items
            .iter()
            .filter(|i| i.dataset.is_none() || i.dataset == dataset)
            .filter(|i| !i.optional || profile.answers_optional)
            .map(|item| ItemResponse { item_id: item.id.clone(), answer: self.answer(form, item, unit, units, rng) })
            .collect();
        SurveySubmission { form: form.id.clone(), unit, respondent, responses }
    }

    fn answer(
        &self,
        form: &SurveyForm,
        item: &SurveyItem,
        unit: Option<usize>,
        units: usize,
        rng: &mut ChaCha8Rng,
    ) -> Answer {
        let q = match unit {
            Some(u) => self.unit_quality(form.units, u, item.id.ends_with("_edited")),
            None => self.session_quality(),
        };
        match item.scale {
            Scale::BinaryMarking => {
                let mut marked = BTreeSet::new();
                for u in 0..units {
                    let meets = rng.random_bool(self.unit_quality(form.units, u, false).clamp(0.02, 0.98));
                    if meets != item.negated {
                        marked.insert(u);
                    }
                }
                let none_acknowledged = marked.is_empty();
                Answer::Marked { units: marked, none_acknowledged }
            }
            Scale::YesNo => Answer::YesNo(rng.random_bool(q.clamp(0.02, 0.98))),
            Scale::Likert5 => {
                let noisy = q + rng.random_range(-0.2..=0.2);
                Answer::Likert((1.0 + 4.0 * noisy.clamp(0.0, 1.0)).round() as u8)
            }
            Scale::FreeForm => Answer::Text(COMMENTS.choose(rng).expect("non-empty").to_string()),
        }
    }

    fn session_quality(&self) -> f64 {
        match &self.state.task {
            TaskState::Qa(s) => {
                let assisted: Vec<_> = s.answers.iter().filter(|a| a.assisted).collect();
                if assisted.is_empty() {
                    0.5
                } else {
                    0.2 + 0.7 * assisted.iter().filter(|a| a.correct).count() as f64 / assisted.len() as f64
                }
            }
            TaskState::Crossword(s) => {
                let solved = s.clues.iter().filter(|c| s.clue_solved(c)).count();
                let asked = s.chat_history.len() / 2;
                let base = solved as f64 / s.clues.len().max(1) as f64;
                if asked == 0 { base } else { 0.15 + 0.7 * base }
            }
            TaskState::Dialogue(_) => self.mean_over(UnitKind::Response),
            TaskState::Summarization(_) => self.mean_over(UnitKind::Summary),
            TaskState::Metaphor(s) => {
                let accepted = s.sentences.iter().filter(|x| x.accepted_suggestion.is_some()).count();
                0.5 * self.mean_over(UnitKind::Sentence) + 0.5 * accepted as f64 / s.sentences.len().max(1) as f64
            }
        }
    }

    fn mean_over(&self, kind: UnitKind) -> f64 {
        let n = self.unit_count(kind);
        if n == 0 {
            return 0.5;
        }
        (0..n).map(|u| self.unit_quality(kind, u, false)).sum::<f64>() / n as f64
    }

    fn unit_count(&self, kind: UnitKind) -> usize {
        match (&self.state.task, kind) {
            (TaskState::Dialogue(s), UnitKind::Response) => s.bot_turns(),
            (TaskState::Summarization(s), UnitKind::Summary) => s.history.len(),
            (TaskState::Metaphor(s), UnitKind::Sentence) => s.sentences.len(),
            _ => 0,
        }
    }

    /// Rough quality of one unit in [0, 1].
    fn unit_quality(&self, kind: UnitKind, unit: usize, edited: bool) -> f64 {
        match (&self.state.task, kind) {
            (TaskState::Dialogue(s), UnitKind::Response) => {
                let Some(pos) = s
                    .dialogue_history
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.speaker == Speaker::Bot)
                    .map(|(i, _)| i)
                    .nth(unit)
                else {
                    return 0.5;
                };
                if s.flagged_turns.contains(&pos) {
                    return 0.1;
                }
                let reply = &s.dialogue_history[pos].text;
                let prev = pos.checked_sub(1).map(|p| s.dialogue_history[p].text.as_str()).unwrap_or("");
                let n = reply.split_whitespace().count();
                let mut q: f64 = 0.55;
                if n < 3 {
                    q -= 0.3;
                }
                if n > 40 {
                    q -= 0.2;
                }
                if overlap(reply, prev) > 0.0 {
                    q += 0.25;
                }
                q.clamp(0.0, 1.0)
            }
            (TaskState::Summarization(s), UnitKind::Summary) => {
                let (doc, text) = match s.history.get(unit) {
                    Some(r) => (r.document.as_str(), if edited { &r.edited } else { &r.original }),
                    None => (s.current_document().map_or("", |d| d.text.as_str()), &s.model_summary),
                };
                if text.trim().is_empty() {
                    return 0.05;
                }
                let n = text.split_whitespace().count();
                let length_ok = if (6..=30).contains(&n) { 1.0 } else { 0.4 };
                let q = 0.6 * overlap(text, doc) + 0.4 * length_ok;
                if edited { q.max(0.75) } else { q }
            }
            (TaskState::Metaphor(s), UnitKind::Sentence) => {
                let Some(rec) = s.sentences.get(unit) else { return 0.5 };
                let n = rec.text.split_whitespace().count();
                let vehicle = s.seed_metaphor.split_once(" is ").map_or("", |(_, v)| v);
                let mut q: f64 = if (6..=20).contains(&n) { 0.6 } else { 0.3 };
                if overlap(&rec.text, vehicle) > 0.0 {
                    q += 0.25;
                }
                q.clamp(0.0, 1.0)
            }
            _ => 0.5,
        }
    }
}

/// Share of the longer-than-three-letter words of `a` that occur in `b`.
pub(crate) fn overlap(a: &str, b: &str) -> f64 {
    let norm = |w: &str| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    let theirs: BTreeSet<String> = b.split_whitespace().map(norm).collect();
    let ours: Vec<String> = a.split_whitespace().map(norm).filter(|w| w.len() > 3).collect();
    if ours.is_empty() {
        return 0.0;
    }
    ours.iter().filter(|w| theirs.contains(*w)).count() as f64 / ours.len() as f64
}
