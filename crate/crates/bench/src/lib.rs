use fsar_core::sim::{run_seed, Arch, RunConfig};

/// One config per architecture and scenario at the given fleet size.
pub fn configs(fleet_size: usize, seed: u64) -> Vec<RunConfig> {
    Arch::ALL
        .iter()
        .flat_map(|&arch| {
            (1..=5).map(move |s| RunConfig::new(arch, s, fleet_size, run_seed(seed, s, 0)).expect("builtin scenario"))
        })
        .collect()
}
