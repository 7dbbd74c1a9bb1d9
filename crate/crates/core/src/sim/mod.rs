//! Deterministic discrete-event simulator.

pub mod clock;
pub mod engine;
pub mod fleet;
pub mod messaging;
pub mod scenarios;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditError, AuditTrace};
use crate::federation::{Ablation, FederationError, UnknownComponent};
use crate::model::{PolicyScope, RobotId, TaskContext};
use crate::registry::RegistryError;
use crate::time::SimTime;

pub use engine::run_scenario;
pub use fleet::{build_fleet, Fleet, FleetConfig, Role};
pub use scenarios::ScenarioSpec;

/// Requester identity the centralized coordinator uses for matching.
pub const COORDINATOR_ID: &str = "coordinator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Fsar,
    Cfc,
    Dhma,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Fsar, Arch::Cfc, Arch::Dhma];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Fsar => "fsar",
            Arch::Cfc => "cfc",
            Arch::Dhma => "dhma",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arch::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| SimError::UnknownArch(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("a fleet needs at least one robot")]
    EmptyFleet,
    #[error("unknown scenario {0}")]
    UnknownScenario(u8),
    #[error("unknown architecture `{0}`")]
    UnknownArch(String),
    #[error(transparent)]
    Ablation(#[from] UnknownComponent),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error("audit guard rejected an event: {0}")]
    Audit(#[from] AuditError),
    #[error("internal invariant violated at {at}: {what}")]
    Invariant { at: SimTime, what: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outage {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub arch: Arch,
    pub scenario: ScenarioSpec,
    pub fleet_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub ablation: Ablation,
    /// Whether an action waits for the supervisor on a review outcome.
    #[serde(default = "default_true")]
    pub review_blocking: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub federation_outage: Option<Outage>,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn new(arch: Arch, scenario: u8, fleet_size: usize, seed: u64) -> Result<Self, SimError> {
        Ok(RunConfig {
            arch,
            scenario: ScenarioSpec::builtin(scenario)?,
            fleet_size,
            seed,
            ablation: Ablation::none(),
            review_blocking: true,
            federation_outage: None,
        })
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub owner: RobotId,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<SimTime>,
    pub deadline: SimTime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Everything a run produced: the audit trace plus what post-hoc analysis needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub trace: AuditTrace,
    pub tasks: Vec<TaskOutcome>,
    /// Configured policies before any ablation.
    pub policies: BTreeMap<RobotId, PolicyScope>,
    pub contexts: BTreeMap<String, TaskContext>,
    /// Every latency sample drawn, in order.
    #[serde(default)]
    pub latency_samples: Vec<f64>,
}

impl RunResult {
    pub fn success_rate(&self) -> f64 {
        if self.tasks.is_empty() {
            return 0.0;
        }
        self.tasks.iter().filter(|t| t.success).count() as f64 / self.tasks.len() as f64
    }
}

/// Seed for the k-th run of a scenario cell.
pub fn run_seed(base: u64, scenario: u8, k: u64) -> u64 {
    base + scenario as u64 * 1000 + k
}
