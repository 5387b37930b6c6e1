//! Core machinery for running human–LM interaction sessions.
//!
//! A session is a sequence of user actions folded through a task-specific
//! transition function. Every action, LM exchange and survey answer is
//! appended to an [`InteractionTrace`](trace::InteractionTrace), which can be
//! persisted as JSON lines and replayed deterministically.

pub mod banks;
pub mod dims;
pub mod lm;
pub mod replay;
pub mod store;
pub mod survey;
pub mod tasks;
pub mod trace;

pub use lm::{
    apply_blocklist, query_lm, Blocklist, Completion, CompletionSet, DecodingParams, LmBackend,
    LmClient, LmError, MockBackend, Prompt,
};
pub use tasks::{TaskAdapter, TaskKind, TaskState};
pub use trace::{
    run_session, step, ActionKind, EndReason, IllegalAction, InteractionTrace, Millis, Payload,
    Session, SessionId, SessionState, TraceEvent, UserAction,
};
