//! Survey instruments, response validation and scoring.
//!
//! Binary marking items ask the respondent to mark units (dialogue
//! responses, metaphorical sentences). For negated items a mark means the
//! unit failed the criterion, so scores are reversed. A respondent who marks
//! nothing must tick the acknowledgement box.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banks::Dataset;
use crate::dims::Perspective;
use crate::tasks::TaskKind;
use crate::trace::{InteractionTrace, SessionState};

const BUNDLED: &str = include_str!("../data/surveys.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    BinaryMarking,
    YesNo,
    Likert5,
    FreeForm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub id: String,
    pub prompt: String,
    pub scale: Scale,
    #[serde(default)]
    pub negated: bool,
    #[serde(default)]
    pub optional: bool,
    /// Metric this item feeds, if any.
    #[serde(default)]
    pub metric: Option<String>,
    /// Restricts the item to sessions drawn from one scenario dataset.
    #[serde(default)]
    pub dataset: Option<Dataset>,
}

impl SurveyItem {
    fn applies_to(&self, dataset: Option<Dataset>) -> bool {
        self.dataset.is_none() || self.dataset == dataset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormScope {
    /// One submission covering the whole session.
    Session,
    /// One submission per unit, identified by `SurveySubmission::unit`.
    Unit,
}

/// What the marks or units of a form refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    None,
    Response,
    Summary,
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyForm {
    pub id: String,
    pub task_kind: TaskKind,
    pub perspective: Perspective,
    pub scope: FormScope,
    pub after_session: bool,
    pub units: UnitKind,
    pub items: Vec<SurveyItem>,
}

impl SurveyForm {
    pub fn item(&self, id: &str) -> Option<&SurveyItem> {
        self.items.iter().find(|i| i.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Respondent {
    FirstPerson,
    ThirdParty { evaluator_id: String },
}

impl Respondent {
    pub fn perspective(&self) -> Perspective {
        match self {
            Respondent::FirstPerson => Perspective::FirstPerson,
            Respondent::ThirdParty { .. } => Perspective::ThirdParty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Marked {
        units: BTreeSet<usize>,
        #[serde(default)]
        none_acknowledged: bool,
    },
    YesNo(bool),
    Likert(u8),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResponse {
    pub item_id: String,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySubmission {
    pub form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<usize>,
    pub respondent: Respondent,
    pub responses: Vec<ItemResponse>,
}

impl SurveySubmission {
    pub fn answer(&self, item_id: &str) -> Option<&Answer> {
        self.responses.iter().find(|r| r.item_id == item_id).map(|r| &r.answer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum SurveyError {
    #[error("unknown survey form {0:?}")]
    UnknownForm(String),
    #[error("form {form:?} belongs to the {expected} task")]
    WrongTask { form: String, expected: TaskKind },
    #[error("form {0:?} expects a different respondent")]
    WrongRespondent(String),
    #[error("form {0:?} needs a unit index")]
    MissingUnit(String),
    #[error("unit {unit} is out of range ({available} available)")]
    UnitOutOfRange { unit: usize, available: usize },
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("item {0:?} answered twice")]
    DuplicateItem(String),
    #[error("answer to {0:?} does not match the item's scale")]
    ScaleMismatch(String),
    #[error("answer to {item:?} out of range: {detail}")]
    OutOfRange { item: String, detail: String },
    #[error("item {0:?}: mark at least one unit or acknowledge that none apply")]
    MissingAcknowledgement(String),
    #[error("incomplete survey, missing {missing:?}")]
    IncompleteSurvey { missing: Vec<String> },
}

/// Score of one item response.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemScore {
    /// One 0/1 score per unit, after reversal for negated items.
    PerUnit(Vec<f64>),
    Value(f64),
    Text(String),
}

/// Scores a single response. `unit_count` is the number of markable units.
pub fn score_item(item: &SurveyItem, answer: &Answer, unit_count: usize) -> Result<ItemScore, SurveyError> {
    match (item.scale, answer) {
        (Scale::BinaryMarking, Answer::Marked { units, none_acknowledged }) => {
            if units.is_empty() && !none_acknowledged {
                return Err(SurveyError::MissingAcknowledgement(item.id.clone()));
            }
            if let Some(&u) = units.iter().find(|&&u| u >= unit_count) {
                return Err(SurveyError::UnitOutOfRange { unit: u, available: unit_count });
            }
            let scores = (0..unit_count)
                .map(|i| {
                    let marked = units.contains(&i);
                    if marked != item.negated { 1.0 } else { 0.0 }
                })
                .collect();
            Ok(ItemScore::PerUnit(scores))
        }
        (Scale::YesNo, Answer::YesNo(b)) => Ok(ItemScore::Value(if *b { 1.0 } else { 0.0 })),
        (Scale::Likert5, Answer::Likert(v)) => {
            if !(1..=5).contains(v) {
                return Err(SurveyError::OutOfRange { item: item.id.clone(), detail: format!("{v} is not in 1..=5") });
            }
            Ok(ItemScore::Value(f64::from(*v)))
        }
        (Scale::FreeForm, Answer::Text(t)) => Ok(ItemScore::Text(t.clone())),
        _ => Err(SurveyError::ScaleMismatch(item.id.clone())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyBank {
    pub forms: Vec<SurveyForm>,
}

impl SurveyBank {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled survey bank is valid")
    }

    pub fn form(&self, id: &str) -> Option<&SurveyForm> {
        self.forms.iter().find(|f| f.id == id)
    }

    pub fn forms_for(&self, kind: TaskKind) -> impl Iterator<Item = &SurveyForm> {
        self.forms.iter().filter(move |f| f.task_kind == kind)
    }

    /// Checks a submission against the form and the session it belongs to.
    pub fn validate(&self, state: &SessionState, sub: &SurveySubmission) -> Result<&SurveyForm, SurveyError> {
        let form = self.form(&sub.form).ok_or_else(|| SurveyError::UnknownForm(sub.form.clone()))?;
        if form.task_kind != state.task_kind {
            return Err(SurveyError::WrongTask { form: form.id.clone(), expected: form.task_kind });
        }
        if sub.respondent.perspective() != form.perspective {
            return Err(SurveyError::WrongRespondent(form.id.clone()));
        }
        let units = state.task.survey_units(form);
        match (form.scope, sub.unit) {
            (FormScope::Unit, None) => return Err(SurveyError::MissingUnit(form.id.clone())),
            (FormScope::Unit, Some(u)) if u >= units => {
                return Err(SurveyError::UnitOutOfRange { unit: u, available: units })
            }
            (FormScope::Session, Some(u)) => return Err(SurveyError::UnitOutOfRange { unit: u, available: 0 }),
            _ => {}
        }
        let dataset = state.task.dataset();
        let mut seen = BTreeSet::new();
        for r in &sub.responses {
            let item = form
                .item(&r.item_id)
                .filter(|i| i.applies_to(dataset))
                .ok_or_else(|| SurveyError::UnknownItem(r.item_id.clone()))?;
            if !seen.insert(r.item_id.as_str()) {
                return Err(SurveyError::DuplicateItem(r.item_id.clone()));
            }
            score_item(item, &r.answer, units)?;
        }
        let missing: Vec<String> = form
            .items
            .iter()
            .filter(|i| !i.optional && i.applies_to(dataset) && !seen.contains(i.id.as_str()))
            .map(|i| i.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(SurveyError::IncompleteSurvey { missing });
        }
        Ok(form)
    }
}

/// Averages every metric-bearing item over all submissions: binary marking
/// rates and yes/no answers as percentages, Likert answers on their 1-5
/// scale. Keys are the items' metric names.
///
/// Fails if a first-person form required after the session is absent.
pub fn aggregate_trace(trace: &InteractionTrace, bank: &SurveyBank) -> Result<BTreeMap<String, f64>, SurveyError> {
    let Some(state) = trace.last_state() else {
        return Ok(BTreeMap::new());
    };
    let submissions: Vec<_> = trace.surveys().collect();
    let missing: Vec<String> = bank
        .forms_for(trace.task_kind())
        .filter(|f| f.perspective == Perspective::FirstPerson && f.scope == FormScope::Session)
        .filter(|f| !submissions.iter().any(|s| s.form == f.id))
        .map(|f| f.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(SurveyError::IncompleteSurvey { missing });
    }
    aggregate_submissions(bank, submissions, |form| state.task.survey_units(form))
}

pub fn aggregate_submissions<'a>(
    bank: &SurveyBank,
    submissions: impl IntoIterator<Item = &'a SurveySubmission>,
    units: impl Fn(&SurveyForm) -> usize,
) -> Result<BTreeMap<String, f64>, SurveyError> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for sub in submissions {
        let form = bank.form(&sub.form).ok_or_else(|| SurveyError::UnknownForm(sub.form.clone()))?;
        let n = units(form);
        for r in &sub.responses {
            let item = form.item(&r.item_id).ok_or_else(|| SurveyError::UnknownItem(r.item_id.clone()))?;
            let Some(metric) = &item.metric else { continue };
            let value = match score_item(item, &r.answer, n)? {
                ItemScore::PerUnit(scores) if !scores.is_empty() => {
                    100.0 * scores.iter().sum::<f64>() / scores.len() as f64
                }
                ItemScore::PerUnit(_) | ItemScore::Text(_) => continue,
                ItemScore::Value(v) if item.scale == Scale::YesNo => 100.0 * v,
                ItemScore::Value(v) => v,
            };
            let e = acc.entry(metric.clone()).or_insert((0.0, 0));
            e.0 += value;
            e.1 += 1;
        }
    }
    Ok(acc.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect())
}
