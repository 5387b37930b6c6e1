//! Session service: the HTTP API, simulated participants and batch runs.

pub mod config;
pub mod policy;
mod respond;
pub mod server;
pub mod simulate;

pub use config::{Environment, ServiceConfig};
pub use policy::{PolicyKind, SimulatedUser};
pub use respond::EVALUATOR_ID;
pub use simulate::{simulate, SimOutcome, SimPlan, SimSpec, EPOCH_MS};
