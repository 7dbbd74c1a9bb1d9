//! Federated single-agent robotics: capability federation, authority, audit
//! and a deterministic discrete-event simulator with baseline architectures.

pub mod audit;
pub mod baselines;
pub mod federation;
pub mod invariants;
pub mod metrics;
pub mod model;
pub mod protocol;
pub mod registry;
pub mod rng;
pub mod runtime;
pub mod sim;
pub mod stats;
pub mod time;
pub mod trust;

pub use audit::{AuditEvent, AuditTrace, EventKind, Principal};
pub use model::*;
pub use time::SimTime;
