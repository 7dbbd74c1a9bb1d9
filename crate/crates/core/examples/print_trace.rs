//! Prints the audit trace of one run: `print_trace <arch> <scenario> <seed>`.
use fsar_core::sim::{run_scenario, Arch, RunConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arch: Arch = args.get(1).map(|s| s.parse().expect("arch")).unwrap_or(Arch::Fsar);
    let scenario: u8 = args.get(2).map(|s| s.parse().expect("scenario")).unwrap_or(1);
    let seed: u64 = args.get(3).map(|s| s.parse().expect("seed")).unwrap_or(42);
    let r = run_scenario(&RunConfig::new(arch, scenario, 4, seed).expect("config")).expect("run");
    for e in &r.trace.events {
        println!("{:>12} {:?} {} {:?}", e.logical_time.to_string(), e.kind, e.principal, e.payload);
    }
    for t in &r.tasks {
        println!("{} success={} reason={:?}", t.task_id, t.success, t.reason);
    }
}
