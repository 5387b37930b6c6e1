//! The interaction loop: session state, user actions, the transition
//! function and the event log it produces.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lm::{CompletionSet, DecodingParams, LmClient, LmError, Prompt};
use crate::survey::{SurveyBank, SurveyError, SurveySubmission};
use crate::tasks::{TaskKind, TaskState, Transition};

pub type Millis = u64;
pub type Fields = BTreeMap<String, Value>;

/// Events between automatic snapshots.
pub const SNAPSHOT_EVERY: usize = 20;

/// Upper bound on actions a scripted source may feed one session.
pub const MAX_ACTIONS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SessionId {
    fn from(s: &str) -> Self {
        SessionId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Finished,
    TimeLimit,
    Solved,
    QuizComplete,
    AllDocumentsSubmitted,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: SessionId,
    pub task_kind: TaskKind,
    pub step_index: u64,
    pub clock: Millis,
    pub started_at: Millis,
    #[serde(default)]
    pub ended: Option<EndReason>,
    #[serde(default)]
    pub surveys: Vec<SurveySubmission>,
    pub task: TaskState,
}

impl SessionState {
    pub fn new(session_id: SessionId, task: TaskState, started_at: Millis) -> Self {
        Self {
            session_id,
            task_kind: task.kind(),
            step_index: 0,
            clock: started_at,
            started_at,
            ended: None,
            surveys: Vec::new(),
            task,
        }
    }

    pub fn visible_fields(&self) -> Fields {
        self.task.visible()
    }

    pub fn hidden_fields(&self) -> Fields {
        self.task.hidden()
    }

    pub fn elapsed(&self) -> Millis {
        self.clock.saturating_sub(self.started_at)
    }

    pub fn is_ended(&self) -> bool {
        self.ended.is_some()
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(canonical_json(self).as_bytes()))
    }
}

/// JSON with object keys in sorted order.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes");
    serde_json::to_string(&v).expect("value re-serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    TypeText,
    ClickButton,
    SelectOption,
    EnterLetter,
    SubmitSurvey,
    Finish,
    /// Client-side signals such as tab switches. Logged, never acted on.
    Telemetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Text(String),
    Choice(usize),
    Letter {
        row: usize,
        col: usize,
        #[serde(default)]
        letter: Option<char>,
    },
    Survey(SurveySubmission),
    Telemetry {
        event: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAction {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
    pub timestamp: Millis,
}

impl UserAction {
    pub fn type_text(field: &str, text: impl Into<String>, timestamp: Millis) -> Self {
        Self {
            kind: ActionKind::TypeText,
            target_field: Some(field.to_string()),
            payload: Some(Payload::Text(text.into())),
            timestamp,
        }
    }

    pub fn click(button: &str, timestamp: Millis) -> Self {
        Self { kind: ActionKind::ClickButton, target_field: Some(button.to_string()), payload: None, timestamp }
    }

    pub fn select(field: &str, index: usize, timestamp: Millis) -> Self {
        Self {
            kind: ActionKind::SelectOption,
            target_field: Some(field.to_string()),
            payload: Some(Payload::Choice(index)),
            timestamp,
        }
    }

    pub fn enter_letter(row: usize, col: usize, letter: Option<char>, timestamp: Millis) -> Self {
        Self {
            kind: ActionKind::EnterLetter,
            target_field: Some("grid".to_string()),
            payload: Some(Payload::Letter { row, col, letter }),
            timestamp,
        }
    }

    pub fn survey(submission: SurveySubmission, timestamp: Millis) -> Self {
        Self { kind: ActionKind::SubmitSurvey, target_field: None, payload: Some(Payload::Survey(submission)), timestamp }
    }

    pub fn telemetry(event: &str, timestamp: Millis) -> Self {
        Self {
            kind: ActionKind::Telemetry,
            target_field: None,
            payload: Some(Payload::Telemetry { event: event.to_string(), detail: None }),
            timestamp,
        }
    }

    pub fn finish(timestamp: Millis) -> Self {
        Self { kind: ActionKind::Finish, target_field: None, payload: None, timestamp }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IllegalAction {
    #[error("{kind:?} on {target:?} is not part of this task's action schema")]
    NotInSchema { kind: ActionKind, target: Option<String> },
    #[error("bad payload: {0}")]
    BadPayload(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("finishing is not allowed yet")]
    FinishNotAllowed,
    #[error("the session has ended")]
    SessionEnded,
    #[error("survey forms of this kind are only accepted after the session ends")]
    SessionNotEnded,
    #[error("action timestamp {action} precedes session clock {clock}")]
    ClockRegression { action: Millis, clock: Millis },
    #[error("{0}")]
    NotReady(String),
    #[error("survey rejected: {0}")]
    Survey(#[from] SurveyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ActionOutcome {
    Applied,
    Rejected { reason: String },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LmOutcome {
    Ok {
        completions: CompletionSet,
        all_filtered: bool,
    },
    Failure {
        error: LmError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    StateSnapshot {
        step_index: u64,
        hash: String,
        state: SessionState,
    },
    UserAction {
        step_index: u64,
        action: UserAction,
        outcome: ActionOutcome,
    },
    LmRequest {
        request_id: String,
        model_id: String,
        prompt: String,
        params: DecodingParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<usize>,
    },
    LmResponse {
        request_id: String,
        outcome: LmOutcome,
        latency_ms: u64,
    },
    SurveyResponse {
        submission: SurveySubmission,
    },
    SessionEnd {
        reason: EndReason,
    },
}

impl EventBody {
    pub fn variant(&self) -> &'static str {
        match self {
            EventBody::StateSnapshot { .. } => "state_snapshot",
            EventBody::UserAction { .. } => "user_action",
            EventBody::LmRequest { .. } => "lm_request",
            EventBody::LmResponse { .. } => "lm_response",
            EventBody::SurveyResponse { .. } => "survey_response",
            EventBody::SessionEnd { .. } => "session_end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub timestamp: Millis,
    pub body: EventBody,
}

/// An event produced by a transition, before it is given a sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingEvent {
    pub timestamp: Millis,
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub session_id: SessionId,
    pub task_kind: TaskKind,
    pub model_id: String,
    pub user_id: String,
    pub created_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTrace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl InteractionTrace {
    pub fn session_id(&self) -> &SessionId {
        &self.header.session_id
    }

    pub fn task_kind(&self) -> TaskKind {
        self.header.task_kind
    }

    pub fn model_id(&self) -> &str {
        &self.header.model_id
    }

    pub fn surveys(&self) -> impl Iterator<Item = &SurveySubmission> {
        self.events.iter().filter_map(|e| match &e.body {
            EventBody::SurveyResponse { submission } => Some(submission),
            _ => None,
        })
    }

    /// The most recent snapshot, normally the one written at session end.
    pub fn last_state(&self) -> Option<&SessionState> {
        self.events.iter().rev().find_map(|e| match &e.body {
            EventBody::StateSnapshot { state, .. } => Some(state),
            _ => None,
        })
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        self.events.iter().find_map(|e| match &e.body {
            EventBody::SessionEnd { reason } => Some(*reason),
            _ => None,
        })
    }

    pub fn count(&self, variant: &str) -> usize {
        self.events.iter().filter(|e| e.body.variant() == variant).count()
    }
}

/// Anything that can answer a query on behalf of the LM: a live client or a
/// recording being replayed.
pub trait LmGateway {
    fn model_id(&self) -> &str;
    fn query(&self, request_id: &str, prompt: &str, params: &DecodingParams) -> Result<CompletionSet, LmError>;
}

impl LmGateway for LmClient {
    fn model_id(&self) -> &str {
        LmClient::model_id(self)
    }

    fn query(&self, request_id: &str, prompt: &str, params: &DecodingParams) -> Result<CompletionSet, LmError> {
        LmClient::query(self, &Prompt::new(prompt, request_id), params)
    }
}

pub struct StepContext<'a> {
    pub request_id: String,
    pub surveys: &'a SurveyBank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: SessionState,
    pub events: Vec<PendingEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepError {
    Illegal(IllegalAction),
    /// The LM could not be reached. The state is unchanged; `events` holds
    /// the request and the failed response.
    Backend { error: LmError, events: Vec<PendingEvent> },
}

impl From<IllegalAction> for StepError {
    fn from(e: IllegalAction) -> Self {
        StepError::Illegal(e)
    }
}

fn end_event(reason: EndReason, at: Millis) -> PendingEvent {
    PendingEvent { timestamp: at, body: EventBody::SessionEnd { reason } }
}

/// True when `action` ends the session: a permitted finish, or a timer or
/// completion condition that holds at the action's time.
pub fn is_terminal(state: &SessionState, action: &UserAction) -> bool {
    if action.kind == ActionKind::Finish && state.task.finish_allowed() {
        return true;
    }
    let elapsed = action.timestamp.saturating_sub(state.started_at);
    state.task.time_limit().is_some_and(|limit| elapsed >= limit) || state.task.completed().is_some()
}

/// Ends the session at `at` because of a timer or abandonment. Returns
/// `None` if it has already ended.
pub fn end_session(state: &SessionState, reason: EndReason, at: Millis) -> Option<(SessionState, PendingEvent)> {
    if state.ended.is_some() {
        return None;
    }
    let mut next = state.clone();
    next.ended = Some(reason);
    next.clock = next.clock.max(at);
    let ts = next.clock;
    Some((next, end_event(reason, ts)))
}

/// The transition function. Returns the next state and the events to record
/// after the user action itself; the input state is never modified.
pub fn step(
    state: &SessionState,
    action: &UserAction,
    lm: &dyn LmGateway,
    ctx: &StepContext<'_>,
) -> Result<StepOutput, StepError> {
    if action.timestamp < state.clock {
        return Err(IllegalAction::ClockRegression { action: action.timestamp, clock: state.clock }.into());
    }
    if state.ended.is_some() && !matches!(action.kind, ActionKind::SubmitSurvey | ActionKind::Telemetry) {
        return Err(IllegalAction::SessionEnded.into());
    }
    let now = action.timestamp;
    let mut next = state.clone();
    next.clock = now;
    next.step_index += 1;
    let mut events = Vec::new();

    match action.kind {
        ActionKind::Finish => {
            if action.payload.is_some() {
                return Err(IllegalAction::BadPayload("finish carries no payload".into()).into());
            }
            if !state.task.finish_allowed() {
                return Err(IllegalAction::FinishNotAllowed.into());
            }
            next.ended = Some(EndReason::Finished);
            events.push(end_event(EndReason::Finished, now));
            return Ok(StepOutput { state: next, events });
        }
        ActionKind::Telemetry => {
            if !matches!(action.payload, Some(Payload::Telemetry { .. })) {
                return Err(IllegalAction::BadPayload("expected a telemetry event".into()).into());
            }
            return Ok(StepOutput { state: next, events });
        }
        ActionKind::SubmitSurvey => {
            let Some(Payload::Survey(submission)) = &action.payload else {
                return Err(IllegalAction::BadPayload("expected a survey submission".into()).into());
            };
            let form = ctx.surveys.validate(state, submission).map_err(IllegalAction::from)?;
            if form.after_session && state.ended.is_none() {
                return Err(IllegalAction::SessionNotEnded.into());
            }
            next.surveys.push(submission.clone());
            events.push(PendingEvent {
                timestamp: now,
                body: EventBody::SurveyResponse { submission: submission.clone() },
            });
            return Ok(StepOutput { state: next, events });
        }
        _ => {}
    }

    match state.task.route(action)? {
        Transition::Update => {
            next.task = state.task.update(action, now)?;
        }
        Transition::Query => {
            let (staged, plan) = state.task.begin_query(action, now)?;
            let request_id = ctx.request_id.clone();
            events.push(PendingEvent {
                timestamp: now,
                body: EventBody::LmRequest {
                    request_id: request_id.clone(),
                    model_id: lm.model_id().to_string(),
                    prompt: plan.prompt.clone(),
                    params: plan.params.clone(),
                    unit: plan.unit,
                },
            });
            match lm.query(&request_id, &plan.prompt, &plan.params) {
                Ok(set) => {
                    let shown_at = now + set.latency_ms;
                    events.push(PendingEvent {
                        timestamp: shown_at,
                        body: EventBody::LmResponse {
                            request_id,
                            latency_ms: set.latency_ms,
                            outcome: LmOutcome::Ok { all_filtered: set.all_filtered(), completions: set.clone() },
                        },
                    });
                    next.clock = shown_at;
                    next.task = staged.show_completions(&plan, &set, shown_at);
                }
                Err(error) => {
                    events.push(PendingEvent {
                        timestamp: now,
                        body: EventBody::LmResponse {
                            request_id,
                            latency_ms: 0,
                            outcome: LmOutcome::Failure { error: error.clone() },
                        },
                    });
                    return Err(StepError::Backend { error, events });
                }
            }
        }
    }

    if let Some(reason) = next.task.completed() {
        next.ended = Some(reason);
        events.push(end_event(reason, next.clock));
    }
    Ok(StepOutput { state: next, events })
}

/// Supplies actions to [`run_session`], typically a simulated user.
pub trait ActionSource {
    fn next_action(&mut self, state: &SessionState) -> Option<UserAction>;
}

/// A fixed list of actions.
pub struct Scripted<I>(pub I);

impl<I: Iterator<Item = UserAction>> ActionSource for Scripted<I> {
    fn next_action(&mut self, _: &SessionState) -> Option<UserAction> {
        self.0.next()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplyResult {
    pub outcome: ActionOutcome,
    /// Sequence numbers of the events this call appended.
    pub events: std::ops::Range<usize>,
}

/// A live session: current state plus the trace recorded so far.
pub struct Session<'a> {
    state: SessionState,
    trace: InteractionTrace,
    lm: &'a dyn LmGateway,
    surveys: &'a SurveyBank,
    since_snapshot: usize,
}

impl<'a> Session<'a> {
    pub fn start(
        initial: SessionState,
        user_id: &str,
        created_at: Millis,
        lm: &'a dyn LmGateway,
        surveys: &'a SurveyBank,
    ) -> Self {
        let header = TraceHeader {
            session_id: initial.session_id.clone(),
            task_kind: initial.task_kind,
            model_id: lm.model_id().to_string(),
            user_id: user_id.to_string(),
            created_at,
        };
        let mut session = Self {
            state: initial,
            trace: InteractionTrace { header, events: Vec::new() },
            lm,
            surveys,
            since_snapshot: 0,
        };
        session.snapshot();
        session
    }

    /// Continues a session from a previously recorded trace.
    pub fn resume(trace: InteractionTrace, state: SessionState, lm: &'a dyn LmGateway, surveys: &'a SurveyBank) -> Self {
        let since_snapshot = trace
            .events
            .iter()
            .rev()
            .take_while(|e| !matches!(e.body, EventBody::StateSnapshot { .. }))
            .count();
        Self { state, trace, lm, surveys, since_snapshot }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn trace(&self) -> &InteractionTrace {
        &self.trace
    }

    pub fn into_trace(self) -> InteractionTrace {
        self.trace
    }

    /// The recorded trace and current state, for callers that keep a
    /// session across requests and resume it later.
    pub fn into_parts(self) -> (InteractionTrace, SessionState) {
        (self.trace, self.state)
    }

    fn push(&mut self, timestamp: Millis, body: EventBody) {
        let seq = self.trace.events.len() as u64;
        let is_snapshot = matches!(body, EventBody::StateSnapshot { .. });
        self.trace.events.push(TraceEvent { seq, timestamp, body });
        if is_snapshot {
            self.since_snapshot = 0;
        } else {
            self.since_snapshot += 1;
        }
    }

    fn snapshot(&mut self) {
        let body = EventBody::StateSnapshot {
            step_index: self.state.step_index,
            hash: self.state.hash(),
            state: self.state.clone(),
        };
        let at = self.last_at();
        self.push(at, body);
    }

    /// Latest recorded time. A failed model call is logged after the
    /// clock it left untouched.
    fn last_at(&self) -> Millis {
        self.trace.events.last().map_or(self.state.clock, |e| e.timestamp.max(self.state.clock))
    }

    fn end(&mut self, reason: EndReason, at: Millis) -> bool {
        match end_session(&self.state, reason, at) {
            Some((next, ev)) => {
                self.state = next;
                self.push(ev.timestamp, ev.body);
                self.snapshot();
                true
            }
            None => false,
        }
    }

    /// Ends the session if its timer has run out by `now`.
    pub fn tick(&mut self, now: Millis) -> bool {
        if self.state.ended.is_some() {
            return false;
        }
        match self.state.task.time_limit() {
            Some(limit) if now.saturating_sub(self.state.started_at) >= limit => {
                self.end(EndReason::TimeLimit, self.state.started_at + limit)
            }
            _ => false,
        }
    }

    /// Ends an unfinished session: at the timer for timed tasks, otherwise
    /// as abandoned.
    pub fn close(&mut self, now: Millis) -> bool {
        if self.state.ended.is_some() {
            return false;
        }
        match self.state.task.time_limit() {
            Some(limit) => {
                let at = (self.state.started_at + limit).max(self.last_at());
                self.end(EndReason::TimeLimit, at)
            }
            None => self.end(EndReason::Abandoned, now.max(self.last_at())),
        }
    }

    pub fn apply(&mut self, action: UserAction) -> ApplyResult {
        let first = self.trace.events.len();
        self.tick(action.timestamp);
        let seq = self.trace.events.len();
        let ctx = StepContext { request_id: format!("req-{}", seq + 1), surveys: self.surveys };
        let step_index = self.state.step_index;
        let result = step(&self.state, &action, self.lm, &ctx);
        let (outcome, events, next) = match result {
            Ok(out) => (ActionOutcome::Applied, out.events, Some(out.state)),
            Err(StepError::Illegal(e)) => (ActionOutcome::Rejected { reason: e.to_string() }, Vec::new(), None),
            Err(StepError::Backend { error, events }) => {
                (ActionOutcome::Failed { reason: error.to_string() }, events, None)
            }
        };
        let ts = action.timestamp.max(self.last_at());
        self.push(ts, EventBody::UserAction { step_index, action, outcome: outcome.clone() });
        let ended_before = self.state.ended.is_some();
        for ev in events {
            self.push(ev.timestamp, ev.body);
        }
        if let Some(next) = next {
            self.state = next;
        }
        if (!ended_before && self.state.ended.is_some()) || self.since_snapshot >= SNAPSHOT_EVERY {
            self.snapshot();
        }
        ApplyResult { outcome, events: first..self.trace.events.len() }
    }
}

/// Feeds actions until the source is exhausted,
/// then close the session if nothing ended it.
pub fn run_session(
    initial: SessionState,
    source: &mut dyn ActionSource,
    lm: &dyn LmGateway,
    surveys: &SurveyBank,
    user_id: &str,
) -> InteractionTrace {
    let created_at = initial.started_at;
    let mut session = Session::start(initial, user_id, created_at, lm, surveys);
    for _ in 0..MAX_ACTIONS {
        let Some(action) = source.next_action(session.state()) else { break };
        session.apply(action);
    }
    let now = session.state().clock;
    session.close(now);
    session.into_trace()
}
