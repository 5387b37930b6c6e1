//! Batch simulation: simulated participants run sessions against every
//! requested model, traces are written to the store and then verified by
//! replay. Sessions run in parallel but each one is fully determined by the
//! batch seed and its position, so reruns produce byte-identical traces.

use std::path::PathBuf;

use interlace_core::replay::{replay_verify, ReplayReport};
use interlace_core::store::{encode_trace, StoreError, TraceStore};
use interlace_core::tasks::TaskAdapter;
use interlace_core::trace::{run_session, EndReason, InteractionTrace, Millis, SessionId, SessionState};
use interlace_core::{LmError, TaskKind};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::Environment;
use crate::policy::{mix, PolicyKind, SimulatedUser};

/// Virtual start time of every simulated session: 2024-01-01T00:00:00Z.
pub const EPOCH_MS: Millis = 1_704_067_200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimPlan {
    pub tasks: Vec<TaskKind>,
    pub models: Vec<String>,
    pub policies: Vec<PolicyKind>,
    /// Sessions per (task, model, policy) cell.
    pub per_cell: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimSpec {
    pub session_id: String,
    pub task: TaskKind,
    pub model_id: String,
    pub policy: PolicyKind,
    pub index: usize,
    /// Drives the initial task state and the participant. It does not
    /// depend on the model, so every model sees the same draws.
    pub seed: u64,
}

impl SimPlan {
    pub fn specs(&self) -> Vec<SimSpec> {
        let mut out = Vec::new();
        for &task in &self.tasks {
            for model in &self.models {
                for &policy in &self.policies {
                    for index in 0..self.per_cell {
                        let seed = mix(&[self.seed, task as u64, policy as u64, index as u64]);
                        out.push(SimSpec {
                            session_id: format!("{task}-{model}-{policy}-{index:03}"),
                            task,
                            model_id: model.clone(),
                            policy,
                            index,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("session {session}: {source}")]
    Model { session: String, source: LmError },
    #[error("session {session}: {source}")]
    Store { session: String, source: StoreError },
    #[error("session {session} did not replay: {detail}")]
    Replay { session: String, detail: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct SimOutcome {
    pub spec: SimSpec,
    pub events: usize,
    pub end_reason: Option<EndReason>,
    pub path: Option<PathBuf>,
    pub replay: ReplayReport,
}

/// Runs one session and returns its trace.
pub fn run_spec(env: &Environment, spec: &SimSpec) -> Result<InteractionTrace, SimError> {
    let client =
        env.client(&spec.model_id).map_err(|source| SimError::Model { session: spec.session_id.clone(), source })?;
    let task = env.adapter(spec.task).initial_state(spec.seed, EPOCH_MS);
    let initial = SessionState::new(SessionId(spec.session_id.clone()), task, EPOCH_MS);
    let mut user = SimulatedUser::new(spec.policy, spec.seed, &env.surveys);
    let user_id = format!("sim-{}-{:03}", spec.policy, spec.index);
    Ok(run_session(initial, &mut user, &client, &env.surveys, &user_id))
}

fn run_and_check(env: &Environment, spec: &SimSpec, store: Option<&TraceStore>) -> Result<SimOutcome, SimError> {
    let trace = run_spec(env, spec)?;
    let path = match store {
        Some(store) => Some(
            store.save(&trace).map_err(|source| SimError::Store { session: spec.session_id.clone(), source })?,
        ),
        None => None,
    };
    let replay = replay_verify(&trace, &env.surveys);
    if !replay.verified {
        let detail = replay.first_divergence().map(|d| format!("{d:?}")).unwrap_or_default();
        return Err(SimError::Replay { session: spec.session_id.clone(), detail });
    }
    Ok(SimOutcome { spec: spec.clone(), events: trace.events.len(), end_reason: trace.end_reason(), path, replay })
}

/// Runs every session of `plan` in parallel. Results come back in plan order.
pub fn simulate(env: &Environment, plan: &SimPlan, store: Option<&TraceStore>) -> Vec<Result<SimOutcome, SimError>> {
    plan.specs().par_iter().map(|spec| run_and_check(env, spec, store)).collect()
}

/// Runs every session and returns the traces in plan order, without storing
/// or verifying them.
pub fn simulate_traces(env: &Environment, plan: &SimPlan) -> Result<Vec<InteractionTrace>, SimError> {
    plan.specs().par_iter().map(|spec| run_spec(env, spec)).collect()
}

/// Encodes a batch the way the store writes it, for comparing reruns.
pub fn encode_batch(traces: &[InteractionTrace]) -> Vec<String> {
    traces.iter().map(encode_trace).collect()
}
