//! Comparison architectures that run on the same simulator as the federated protocol.

pub mod cfc;
pub mod dhma;

use crate::sim::{run_scenario, Arch, RunConfig, RunResult, SimError};

/// Runs a scenario under the centralized coordinator.
pub fn cfc_coordinate(scenario: u8, fleet_size: usize, seed: u64) -> Result<RunResult, SimError> {
    run_scenario(&RunConfig::new(Arch::Cfc, scenario, fleet_size, seed)?)
}

/// Runs a scenario under the hierarchical multi-agent baseline.
pub fn dhma_coordinate(scenario: u8, fleet_size: usize, seed: u64) -> Result<RunResult, SimError> {
    run_scenario(&RunConfig::new(Arch::Dhma, scenario, fleet_size, seed)?)
}
