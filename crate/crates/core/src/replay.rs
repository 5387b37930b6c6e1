//! Deterministic replay. A trace is re-folded through [`step`] with the
//! recorded LM responses standing in for the backend, and every recorded
//! snapshot is compared with the reconstructed state.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::lm::{CompletionSet, DecodingParams, LmError};
use crate::survey::SurveyBank;
use crate::trace::{
    end_session, step, ActionOutcome, EventBody, InteractionTrace, LmGateway, LmOutcome, PendingEvent, SessionState,
    StepContext, StepError, TraceEvent,
};

/// Serves LM responses out of a recorded trace, keyed by request id.
pub struct ReplayGateway {
    model_id: String,
    responses: HashMap<String, Result<CompletionSet, LmError>>,
}

impl ReplayGateway {
    pub fn from_trace(trace: &InteractionTrace) -> Self {
        let responses = trace
            .events
            .iter()
            .filter_map(|e| match &e.body {
                EventBody::LmResponse { request_id, outcome, .. } => {
                    let r = match outcome {
                        LmOutcome::Ok { completions, .. } => Ok(completions.clone()),
                        LmOutcome::Failure { error } => Err(error.clone()),
                    };
                    Some((request_id.clone(), r))
                }
                _ => None,
            })
            .collect();
        Self { model_id: trace.model_id().to_string(), responses }
    }
}

impl LmGateway for ReplayGateway {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn query(&self, request_id: &str, _prompt: &str, _params: &DecodingParams) -> Result<CompletionSet, LmError> {
        self.responses
            .get(request_id)
            .cloned()
            .unwrap_or_else(|| Err(LmError::BackendFailure(format!("no recorded response for {request_id}"))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// The trace does not open with a snapshot.
    MissingInitialSnapshot,
    /// A snapshot's stored hash does not match its own body.
    CorruptSnapshot,
    /// The reconstructed state differs from the recorded snapshot.
    StateMismatch,
    /// Re-running an action gave a different outcome.
    OutcomeMismatch,
    /// A regenerated event differs from the recorded one.
    EventMismatch,
    /// The trace ends before all regenerated events were seen.
    MissingEvent,
    /// A recorded event that nothing in the replay accounts for.
    UnexpectedEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub seq: u64,
    pub kind: DivergenceKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub verified: bool,
    pub actions_replayed: usize,
    pub snapshots_checked: usize,
    pub divergences: Vec<Divergence>,
}

impl ReplayReport {
    pub fn first_divergence(&self) -> Option<&Divergence> {
        self.divergences.first()
    }
}

struct Verifier<'t> {
    events: &'t [TraceEvent],
    divergences: Vec<Divergence>,
}

impl Verifier<'_> {
    fn diverge(&mut self, seq: u64, kind: DivergenceKind, detail: impl Into<String>) {
        self.divergences.push(Divergence { seq, kind, detail: detail.into() });
    }

    /// Compares regenerated events with the recorded ones starting at `at`.
    /// Returns how many recorded events were consumed.
    fn consume(&mut self, at: usize, generated: &[PendingEvent]) -> usize {
        for (k, gen) in generated.iter().enumerate() {
            let Some(rec) = self.events.get(at + k) else {
                let seq = self.events.last().map_or(0, |e| e.seq);
                self.diverge(seq, DivergenceKind::MissingEvent, format!("expected a {} event", gen.body.variant()));
                return k;
            };
            if rec.timestamp != gen.timestamp || rec.body != gen.body {
                self.diverge(
                    rec.seq,
                    DivergenceKind::EventMismatch,
                    format!("recorded {} differs from replayed {}", rec.body.variant(), gen.body.variant()),
                );
            }
        }
        generated.len()
    }
}

fn outcome_of(result: &Result<crate::trace::StepOutput, StepError>) -> ActionOutcome {
    match result {
        Ok(_) => ActionOutcome::Applied,
        Err(StepError::Illegal(e)) => ActionOutcome::Rejected { reason: e.to_string() },
        Err(StepError::Backend { error, .. }) => ActionOutcome::Failed { reason: error.to_string() },
    }
}

/// Re-folds `trace` and reports every point where it disagrees with the
/// reconstruction. Pure: reads the trace and nothing else.
pub fn replay_verify(trace: &InteractionTrace, surveys: &SurveyBank) -> ReplayReport {
    let gateway = ReplayGateway::from_trace(trace);
    let mut v = Verifier { events: &trace.events, divergences: Vec::new() };
    let mut actions_replayed = 0;
    let mut snapshots_checked = 0;

    let mut state: SessionState = match trace.events.first() {
        Some(TraceEvent { body: EventBody::StateSnapshot { state, hash, .. }, seq, .. }) => {
            snapshots_checked += 1;
            if &state.hash() != hash {
                v.diverge(*seq, DivergenceKind::CorruptSnapshot, "initial snapshot hash does not match its body");
            }
            if state.session_id != trace.header.session_id || state.task_kind != trace.header.task_kind {
                v.diverge(*seq, DivergenceKind::StateMismatch, "initial snapshot disagrees with the header");
            }
            state.clone()
        }
        first => {
            let seq = first.map_or(0, |e| e.seq);
            v.diverge(seq, DivergenceKind::MissingInitialSnapshot, "trace does not start with a snapshot");
            return ReplayReport { verified: false, actions_replayed, snapshots_checked, divergences: v.divergences };
        }
    };

    let mut i = 1;
    while i < trace.events.len() {
        let ev = &trace.events[i];
        match &ev.body {
            EventBody::StateSnapshot { step_index, hash, state: recorded } => {
                snapshots_checked += 1;
                if &recorded.hash() != hash {
                    v.diverge(ev.seq, DivergenceKind::CorruptSnapshot, "snapshot hash does not match its body");
                }
                if &state.hash() != hash || *step_index != state.step_index {
                    v.diverge(ev.seq, DivergenceKind::StateMismatch, "reconstructed state differs from snapshot");
                }
                i += 1;
            }
            EventBody::UserAction { action, outcome, .. } => {
                actions_replayed += 1;
                let ctx = StepContext { request_id: format!("req-{}", ev.seq + 1), surveys };
                let result = step(&state, action, &gateway, &ctx);
                let replayed = outcome_of(&result);
                if &replayed != outcome {
                    v.diverge(ev.seq, DivergenceKind::OutcomeMismatch, format!("recorded {outcome:?}, replayed {replayed:?}"));
                }
                if ev.timestamp != action.timestamp.max(state.clock) {
                    v.diverge(ev.seq, DivergenceKind::EventMismatch, "action event timestamp is off");
                }
                let (events, next) = match result {
                    Ok(out) => (out.events, Some(out.state)),
                    Err(StepError::Illegal(_)) => (Vec::new(), None),
                    Err(StepError::Backend { events, .. }) => (events, None),
                };
                i += 1 + v.consume(i + 1, &events);
                if let Some(next) = next {
                    state = next;
                }
            }
            EventBody::SessionEnd { reason } => {
                match end_session(&state, *reason, ev.timestamp) {
                    Some((next, gen)) => {
                        v.consume(i, std::slice::from_ref(&gen));
                        state = next;
                    }
                    None => v.diverge(ev.seq, DivergenceKind::UnexpectedEvent, "session ended twice"),
                }
                i += 1;
            }
            other => {
                v.diverge(ev.seq, DivergenceKind::UnexpectedEvent, format!("stray {} event", other.variant()));
                i += 1;
            }
        }
    }

    ReplayReport { verified: v.divergences.is_empty(), actions_replayed, snapshots_checked, divergences: v.divergences }
}
