#![allow(dead_code)]

use std::sync::Arc;

use interlace_core::banks::TaskBanks;
use interlace_core::lm::{DecodingParams, RetryPolicy};
use interlace_core::survey::SurveyBank;
use interlace_core::tasks::{BankAdapter, TaskAdapter, TaskConfig};
use interlace_core::trace::{EventBody, InteractionTrace, Millis, Session, SessionId, SessionState, UserAction};
use interlace_core::{ActionKind, Blocklist, LmClient, MockBackend, TaskKind};

pub const T0: Millis = 1_000_000;

pub fn client(model: &str) -> LmClient {
    LmClient::new(Arc::new(MockBackend::for_model(model)), Blocklist::bundled()).with_retry(RetryPolicy::immediate())
}

pub fn initial(kind: TaskKind, seed: u64) -> SessionState {
    let adapter = BankAdapter::new(kind, Arc::new(TaskBanks::bundled()), TaskConfig::default());
    SessionState::new(SessionId(format!("{kind}-test-{seed}")), adapter.initial_state(seed, T0), T0)
}

/// Drives a session by hand, stamping actions one second apart.
pub struct Driver<'a> {
    pub session: Session<'a>,
    pub now: Millis,
}

impl<'a> Driver<'a> {
    pub fn new(state: SessionState, lm: &'a LmClient, surveys: &'a SurveyBank) -> Self {
        Self { session: Session::start(state, "tester", T0, lm, surveys), now: T0 }
    }

    pub fn state(&self) -> &SessionState {
        self.session.state()
    }

    pub fn at(&mut self, gap: Millis) -> Millis {
        self.now = self.now.max(self.session.state().clock) + gap;
        self.now
    }

    pub fn act(&mut self, make: impl FnOnce(Millis) -> UserAction) -> bool {
        let ts = self.at(1_000);
        let r = self.session.apply(make(ts));
        r.outcome == interlace_core::trace::ActionOutcome::Applied
    }

    pub fn type_text(&mut self, field: &str, text: &str) -> bool {
        self.act(|t| UserAction::type_text(field, text, t))
    }

    pub fn click(&mut self, button: &str) -> bool {
        self.act(|t| UserAction::click(button, t))
    }

    pub fn select(&mut self, field: &str, i: usize) -> bool {
        self.act(|t| UserAction::select(field, i, t))
    }

    pub fn finish(&mut self) -> bool {
        self.act(UserAction::finish)
    }

    pub fn into_trace(self) -> InteractionTrace {
        self.session.into_trace()
    }
}

pub fn requests(trace: &InteractionTrace) -> Vec<(String, DecodingParams, Option<usize>)> {
    trace
        .events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::LmRequest { prompt, params, unit, .. } => Some((prompt.clone(), params.clone(), *unit)),
            _ => None,
        })
        .collect()
}

pub fn rejected(trace: &InteractionTrace) -> usize {
    trace
        .events
        .iter()
        .filter(|e| {
            matches!(&e.body, EventBody::UserAction { outcome: interlace_core::trace::ActionOutcome::Rejected { .. }, action, .. } if action.kind != ActionKind::Telemetry)
        })
        .count()
}
