use std::path::PathBuf;

use anyhow::Result;
use fsar_core::federation::{Ablation, Component};
use fsar_core::sim::{run_seed, Arch, RunConfig};
use serde::{Deserialize, Serialize};

pub const DEFAULT_RUNS: u64 = 20;
pub const DEFAULT_SEED: u64 = 42;
pub const SCALING_SIZES: [usize; 3] = [4, 8, 16];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub architectures: Vec<Arch>,
    pub scenarios: Vec<u8>,
    pub runs_per_cell: u64,
    pub base_seed: u64,
    pub fleet_sizes: Vec<usize>,
    pub ablations: Vec<Ablation>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            architectures: Arch::ALL.to_vec(),
            scenarios: (1..=5).collect(),
            runs_per_cell: DEFAULT_RUNS,
            base_seed: DEFAULT_SEED,
            fleet_sizes: vec![4],
            ablations: vec![Ablation::none()],
            output_dir: None,
        }
    }
}

/// Full FSAR plus each single-component removal.
pub fn ablation_conditions() -> Vec<Ablation> {
    std::iter::once(Ablation::none())
        .chain(Component::ALL.iter().map(|c| Ablation::of(&[*c])))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub id: String,
    pub config: RunConfig,
}

pub fn run_id(cfg: &RunConfig, k: u64) -> String {
    format!(
        "{}-s{}-n{}-{}-k{k}",
        cfg.arch,
        cfg.scenario.id,
        cfg.fleet_size,
        cfg.ablation.label().replace(',', "")
    )
}

impl ExperimentPlan {
    pub fn matrix() -> Self {
        Self::default()
    }

    pub fn ablation() -> Self {
        ExperimentPlan {
            architectures: vec![Arch::Fsar],
            ablations: ablation_conditions(),
            ..Self::default()
        }
    }

    pub fn scaling() -> Self {
        ExperimentPlan {
            fleet_sizes: SCALING_SIZES.to_vec(),
            ..Self::default()
        }
    }

    pub fn total_runs(&self) -> usize {
        self.architectures.len()
            * self.scenarios.len()
            * self.runs_per_cell as usize
            * self.fleet_sizes.len()
            * self.ablations.len()
    }

    pub fn runs(&self) -> Result<Vec<PlannedRun>> {
        let mut out = Vec::with_capacity(self.total_runs());
        for &arch in &self.architectures {
            for &n in &self.fleet_sizes {
                for ablation in &self.ablations {
                    for &s in &self.scenarios {
                        for k in 0..self.runs_per_cell {
                            let config = RunConfig::new(arch, s, n, run_seed(self.base_seed, s, k))?
                                .with_ablation(ablation.clone());
                            out.push(PlannedRun {
                                id: run_id(&config, k),
                                config,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
