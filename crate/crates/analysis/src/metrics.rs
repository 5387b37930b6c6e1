//! Per-trace metrics, each placed on the target, perspective and criteria
//! dimensions by the bundled metric bank.

use std::collections::BTreeMap;

use interlace_core::dims::{Criteria, Perspective, Target};
use interlace_core::survey::{aggregate_submissions, SurveyBank};
use interlace_core::tasks::crossword::CrosswordState;
use interlace_core::tasks::metaphor::{MetaphorState, Resolution};
use interlace_core::tasks::qa::QaState;
use interlace_core::tasks::summarization::SummarizationState;
use interlace_core::trace::EventBody;
use interlace_core::{InteractionTrace, Millis, TaskKind, TaskState};
use serde::{Deserialize, Serialize};

use crate::classify::{classify, PromptCategory, PromptContext};
use crate::text::{density, word_edit_distance};

const BUNDLED: &str = include_str!("../data/metrics.json");
const MS_PER_MINUTE: f64 = 60_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricUnit {
    Turn,
    Dialogue,
    Question,
    Quiz,
    Puzzle,
    Summary,
    Sentence,
    Session,
    /// Tracked across successive units to show adaptation over time.
    Change,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Auto,
    Survey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoMeasure {
    QaAccuracyAssisted,
    QaAccuracyUnassisted,
    QaTime,
    QaQueries,
    QaQueriesChange,
    QaPromptStyleChange,
    CrosswordLetterAccuracy,
    CrosswordClueAccuracy,
    CrosswordQueries,
    CrosswordPromptStyleChange,
    SummaryEditDistance,
    SummaryEditDistanceChange,
    SummaryDensity,
    MetaphorQueries,
    MetaphorAcceptance,
    MetaphorEdit,
    MetaphorTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSource {
    /// Mean of a survey item's metric over submissions from the spec's perspective.
    Survey { metric: String },
    Auto { measure: AutoMeasure },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub key: String,
    pub name: String,
    pub task: TaskKind,
    pub target: Target,
    pub unit: MetricUnit,
    pub method: Method,
    pub perspective: Perspective,
    pub criteria: Criteria,
    pub source: MetricSource,
    /// Part of the standard metric table rather than a supplementary extra.
    #[serde(default = "yes")]
    pub headline: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricBank {
    pub metrics: Vec<MetricSpec>,
}

impl MetricBank {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled metric bank is valid")
    }

    pub fn for_task(&self, task: TaskKind) -> impl Iterator<Item = &MetricSpec> {
        self.metrics.iter().filter(move |m| m.task == task)
    }

    pub fn get(&self, task: TaskKind, key: &str) -> Option<&MetricSpec> {
        self.metrics.iter().find(|m| m.task == task && m.key == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Drop QA traces whose attention check was answered wrongly.
    pub exclude_failed_attention: bool,
    /// Window for the rolling averages in change series.
    pub rolling_window: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { exclude_failed_attention: true, rolling_window: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub key: String,
    pub session_id: String,
    pub model_id: String,
    pub value: f64,
    pub unit_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFlag {
    AttentionCheckFailed,
    AttentionCheckMissing,
    EmptySummary,
    NoFinalState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub session_id: String,
    pub model_id: String,
    pub task: TaskKind,
    pub values: Vec<MetricValue>,
    /// Per-unit series feeding the change metrics, keyed by series name.
    pub series: BTreeMap<String, Vec<Option<f64>>>,
    pub flags: Vec<TraceFlag>,
    /// Left out of aggregates, for instance after a failed attention check.
    pub excluded: bool,
}

impl TraceMetrics {
    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|v| v.key == key).map(|v| v.value)
    }
}

/// Trailing mean over at most `window` points.
pub fn rolling_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be positive");
    (0..series.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            let w = &series[start..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Late-minus-early shift of a series: mean of the second half minus mean
/// of the first half, over defined points. Needs two points.
pub fn change_score(series: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<f64> = series.iter().flatten().copied().collect();
    if pts.len() < 2 {
        return None;
    }
    let half = pts.len() / 2;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Some(mean(&pts[half..]) - mean(&pts[..half]))
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn minutes(ms: Millis) -> f64 {
    ms as f64 / MS_PER_MINUTE
}

fn final_task(trace: &InteractionTrace) -> Option<&TaskState> {
    trace.last_state().map(|s| &s.task)
}

/// Prompts sent in the trace with the unit they were attributed to.
pub fn prompts(trace: &InteractionTrace) -> Vec<(Option<usize>, &str)> {
    trace
        .events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::LmRequest { unit, prompt, .. } => Some((*unit, prompt.as_str())),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaAccuracy {
    pub assisted: Option<f64>,
    pub unassisted: Option<f64>,
    /// None when the attention check was never answered.
    pub attention_passed: Option<bool>,
}

fn percent(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

pub fn qa_accuracy_of(state: &QaState) -> QaAccuracy {
    let scored: Vec<_> = state.answers.iter().filter(|a| !a.is_attention_check).collect();
    let split = |assisted: bool| {
        let part: Vec<_> = scored.iter().filter(|a| a.assisted == assisted).collect();
        percent(part.iter().filter(|a| a.correct).count(), part.len())
    };
    QaAccuracy {
        assisted: split(true),
        unassisted: split(false),
        attention_passed: state.answers.iter().find(|a| a.is_attention_check).map(|a| a.correct),
    }
}

pub fn qa_accuracy(trace: &InteractionTrace) -> Option<QaAccuracy> {
    match final_task(trace)? {
        TaskState::Qa(q) => Some(qa_accuracy_of(q)),
        _ => None,
    }
}

/// Letter and clue accuracy of the final grid, both percentages. Empty
/// cells count as wrong.
pub fn crossword_accuracy_of(state: &CrosswordState) -> (f64, f64) {
    let slots: Vec<_> = state.letter_slots().collect();
    let letters = percent(slots.iter().filter(|&&(r, c)| state.is_correct(r, c)).count(), slots.len());
    let clues = percent(state.clues.iter().filter(|c| state.clue_solved(c)).count(), state.clues.len());
    (letters.unwrap_or(0.0), clues.unwrap_or(0.0))
}

pub fn crossword_accuracy(trace: &InteractionTrace) -> Option<(f64, f64)> {
    match final_task(trace)? {
        TaskState::Crossword(c) => Some(crossword_accuracy_of(c)),
        _ => None,
    }
}

/// Share of shown suggestion sets the user picked from, out of those they
/// either picked from or dismissed.
pub fn acceptance_rate_of(state: &MetaphorState) -> Option<f64> {
    let accepted = state.queries.iter().filter(|q| q.resolution == Resolution::Selected).count();
    let dismissed = state.queries.iter().filter(|q| q.resolution == Resolution::Dismissed).count();
    percent(accepted, accepted + dismissed)
}

pub fn acceptance_rate(trace: &InteractionTrace) -> Option<f64> {
    match final_task(trace)? {
        TaskState::Metaphor(m) => acceptance_rate_of(m),
        _ => None,
    }
}

/// Number of LM requests attributed to each unit index, for `units` units.
pub fn queries_per_unit(trace: &InteractionTrace, units: usize) -> Vec<usize> {
    let mut counts = vec![0; units];
    for (unit, _) in prompts(trace) {
        if let Some(c) = unit.and_then(|u| counts.get_mut(u)) {
            *c += 1;
        }
    }
    counts
}

fn qa_metrics(trace: &InteractionTrace, q: &QaState, out: &mut Collector) {
    let acc = qa_accuracy_of(q);
    match acc.attention_passed {
        Some(false) => out.flag(TraceFlag::AttentionCheckFailed),
        None => out.flag(TraceFlag::AttentionCheckMissing),
        Some(true) => {}
    }
    let scored = q.answers.iter().filter(|a| !a.is_attention_check);
    let assisted: Vec<_> = scored.filter(|a| a.assisted).collect();
    out.auto(AutoMeasure::QaAccuracyAssisted, acc.assisted, assisted.len());
    let unassisted = q.answers.iter().filter(|a| !a.is_attention_check && !a.assisted).count();
    out.auto(AutoMeasure::QaAccuracyUnassisted, acc.unassisted, unassisted);

    let times: Vec<f64> = assisted.iter().map(|a| minutes(a.answered_at.saturating_sub(a.shown_at))).collect();
    out.auto(AutoMeasure::QaTime, mean(&times), times.len());

    let per_index = queries_per_unit(trace, q.quiz.len());
    let assisted_idx: Vec<usize> = q.quiz.iter().enumerate().filter(|(_, i)| i.assisted).map(|(n, _)| n).collect();
    let answered: Vec<usize> = assisted.iter().map(|a| a.index).collect();
    let queries: Vec<f64> = answered.iter().map(|&i| per_index[i] as f64).collect();
    out.auto(AutoMeasure::QaQueries, mean(&queries), queries.len());

    // Series run over assisted questions in quiz order.
    let query_series: Vec<Option<f64>> =
        assisted_idx.iter().map(|i| answered.contains(i).then(|| per_index[*i] as f64)).collect();
    out.auto(AutoMeasure::QaQueriesChange, change_score(&query_series), query_series.len());
    out.series("queries_by_question", query_series);

    let mut by_question: Vec<Vec<PromptCategory>> = vec![Vec::new(); assisted_idx.len()];
    for (unit, prompt) in prompts(trace) {
        let Some(u) = unit else { continue };
        let Some(slot) = assisted_idx.iter().position(|&i| i == u) else { continue };
        let item = &q.quiz[u].question;
        let ctx = PromptContext { question_text: &item.text, choices: &item.choices, task: TaskKind::Qa };
        by_question[slot].push(classify(prompt, &ctx));
    }
    style_series(out, AutoMeasure::QaPromptStyleChange, &by_question);
}

/// Emits one share series per category plus the change score for the
/// question-style share.
fn style_series(out: &mut Collector, measure: AutoMeasure, buckets: &[Vec<PromptCategory>]) {
    for cat in PromptCategory::PRECEDENCE {
        let s: Vec<Option<f64>> = buckets
            .iter()
            .map(|b| (!b.is_empty()).then(|| b.iter().filter(|&&c| c == cat).count() as f64 / b.len() as f64))
            .collect();
        if cat == PromptCategory::Question {
            let n = s.iter().flatten().count();
            out.auto(measure, change_score(&s), n);
        }
        out.series(&format!("prompt_share_{}", cat.as_str()), s);
    }
}

fn crossword_metrics(trace: &InteractionTrace, c: &CrosswordState, out: &mut Collector) {
    let (letters, clues) = crossword_accuracy_of(c);
    let slots = c.letter_slots().count();
    out.auto(AutoMeasure::CrosswordLetterAccuracy, Some(letters), slots);
    out.auto(AutoMeasure::CrosswordClueAccuracy, Some(clues), c.clues.len());
    let sent = prompts(trace);
    out.auto(AutoMeasure::CrosswordQueries, Some(sent.len() as f64), 1);
    // One bucket per prompt, in the order they were sent.
    let buckets: Vec<Vec<PromptCategory>> = sent
        .iter()
        .map(|(unit, prompt)| {
            let clue = unit.and_then(|u| c.clues.get(u)).map_or("", |cl| cl.text.as_str());
            let ctx = PromptContext { question_text: clue, choices: &[], task: TaskKind::Crossword };
            vec![classify(prompt, &ctx)]
        })
        .collect();
    style_series(out, AutoMeasure::CrosswordPromptStyleChange, &buckets);
}

fn summarization_metrics(s: &SummarizationState, out: &mut Collector) {
    let edits: Vec<f64> = s.history.iter().map(|h| word_edit_distance(&h.original, &h.edited) as f64).collect();
    out.auto(AutoMeasure::SummaryEditDistance, mean(&edits), edits.len());
    let series: Vec<Option<f64>> = edits.iter().copied().map(Some).collect();
    out.auto(AutoMeasure::SummaryEditDistanceChange, change_score(&series), series.len());
    out.series("edit_distance_by_summary", series);
    let mut dens = Vec::new();
    for h in &s.history {
        let d = density(&h.original, &h.document);
        if d.empty_summary {
            out.flag(TraceFlag::EmptySummary);
        } else {
            dens.push(d.value);
        }
    }
    out.auto(AutoMeasure::SummaryDensity, mean(&dens), dens.len());
}

fn metaphor_metrics(m: &MetaphorState, out: &mut Collector) {
    let n = m.sentences.len();
    let queries: Vec<f64> = m.sentences.iter().map(|s| s.queries as f64).collect();
    out.auto(AutoMeasure::MetaphorQueries, mean(&queries), n);
    let resolved = m.queries.iter().filter(|q| matches!(q.resolution, Resolution::Selected | Resolution::Dismissed)).count();
    out.auto(AutoMeasure::MetaphorAcceptance, acceptance_rate_of(m), resolved);
    let edits: Vec<f64> = m
        .sentences
        .iter()
        .filter_map(|s| s.accepted_suggestion.as_ref().map(|a| word_edit_distance(a, &s.text) as f64))
        .collect();
    out.auto(AutoMeasure::MetaphorEdit, mean(&edits), edits.len());
    let times: Vec<f64> = m.sentences.iter().map(|s| minutes(s.submitted_at.saturating_sub(s.started_at))).collect();
    out.auto(AutoMeasure::MetaphorTime, mean(&times), n);
}

struct Collector {
    auto: BTreeMap<AutoMeasure, (f64, usize)>,
    series: BTreeMap<String, Vec<Option<f64>>>,
    flags: Vec<TraceFlag>,
}

impl Collector {
    fn auto(&mut self, m: AutoMeasure, value: Option<f64>, units: usize) {
        if let Some(v) = value {
            self.auto.insert(m, (v, units));
        }
    }

    fn series(&mut self, name: &str, s: Vec<Option<f64>>) {
        self.series.insert(name.to_string(), s);
    }

    fn flag(&mut self, f: TraceFlag) {
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
    }
}

/// Survey metric means for one perspective, with the number of submissions
/// that fed each.
fn survey_values(
    trace: &InteractionTrace,
    surveys: &SurveyBank,
    perspective: Perspective,
) -> BTreeMap<String, (f64, usize)> {
    let Some(state) = trace.last_state() else { return BTreeMap::new() };
    let subs: Vec<_> = trace.surveys().filter(|s| s.respondent.perspective() == perspective).collect();
    let Ok(means) = aggregate_submissions(surveys, subs.iter().copied(), |f| state.task.survey_units(f)) else {
        return BTreeMap::new();
    };
    means
        .into_iter()
        .map(|(k, v)| {
            let n = subs
                .iter()
                .filter(|s| {
                    surveys.form(&s.form).is_some_and(|f| {
                        s.responses.iter().any(|r| f.item(&r.item_id).and_then(|i| i.metric.as_deref()) == Some(&k))
                    })
                })
                .count();
            (k, (v, n))
        })
        .collect()
}

/// Every metric in `bank` that applies to the trace's task. Metrics that
/// cannot be computed (no surveys, no sentences, ...) are simply absent.
pub fn compute_trace_metrics(
    trace: &InteractionTrace,
    surveys: &SurveyBank,
    bank: &MetricBank,
    config: &AnalysisConfig,
) -> TraceMetrics {
    let mut out = Collector { auto: BTreeMap::new(), series: BTreeMap::new(), flags: Vec::new() };
    match final_task(trace) {
        Some(TaskState::Qa(q)) => qa_metrics(trace, q, &mut out),
        Some(TaskState::Crossword(c)) => crossword_metrics(trace, c, &mut out),
        Some(TaskState::Summarization(s)) => summarization_metrics(s, &mut out),
        Some(TaskState::Metaphor(m)) => metaphor_metrics(m, &mut out),
        Some(TaskState::Dialogue(_)) => {}
        None => out.flag(TraceFlag::NoFinalState),
    }
    if config.rolling_window >= 1 {
        let w = config.rolling_window;
        let smoothed: Vec<(String, Vec<Option<f64>>)> = out
            .series
            .iter()
            .map(|(k, s)| {
                let dense: Vec<f64> = s.iter().flatten().copied().collect();
                (format!("{k}_rolling"), rolling_average(&dense, w).into_iter().map(Some).collect())
            })
            .collect();
        out.series.extend(smoothed);
    }
    let first = survey_values(trace, surveys, Perspective::FirstPerson);
    let third = survey_values(trace, surveys, Perspective::ThirdParty);

    let session_id = trace.session_id().to_string();
    let model_id = trace.model_id().to_string();
    let mut values = Vec::new();
    for spec in bank.for_task(trace.task_kind()) {
        let found = match &spec.source {
            MetricSource::Auto { measure } => out.auto.get(measure).copied(),
            MetricSource::Survey { metric } => match spec.perspective {
                Perspective::FirstPerson => first.get(metric).copied(),
                Perspective::ThirdParty => third.get(metric).copied(),
            },
        };
        if let Some((value, unit_count)) = found {
            values.push(MetricValue {
                key: spec.key.clone(),
                session_id: session_id.clone(),
                model_id: model_id.clone(),
                value,
                unit_count,
            });
        }
    }
    out.flags.sort();
    let excluded = config.exclude_failed_attention && out.flags.contains(&TraceFlag::AttentionCheckFailed);
    TraceMetrics { session_id, model_id, task: trace.task_kind(), values, series: out.series, flags: out.flags, excluded }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rolling_examples() {
        assert_eq!(rolling_average(&[2.0, 4.0, 6.0], 2), vec![2.0, 3.0, 5.0]);
        assert_eq!(rolling_average(&[2.0, 4.0, 6.0], 1), vec![2.0, 4.0, 6.0]);
        assert_eq!(rolling_average(&[2.0, 4.0, 6.0], 9), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn change_score_halves() {
        assert_eq!(change_score(&[Some(1.0), None, Some(3.0)]), Some(2.0));
        assert_eq!(change_score(&[Some(1.0), Some(1.0), Some(4.0)]), Some(1.5));
        assert_eq!(change_score(&[Some(1.0)]), None);
    }

    #[test]
    fn bank_has_all_table_rows() {
        let bank = MetricBank::bundled();
        assert_eq!(bank.metrics.iter().filter(|m| m.headline).count(), 47);
        let per_task: Vec<usize> =
            TaskKind::ALL.iter().map(|t| bank.for_task(*t).filter(|m| m.headline).count()).collect();
        assert_eq!(per_task, vec![7, 8, 8, 10, 14]);
        for m in &bank.metrics {
            assert_eq!(m.method == Method::Survey, matches!(m.source, MetricSource::Survey { .. }), "{}", m.key);
        }
    }
}
