use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use fsar_core::federation::{Ablation, Component};
use fsar_core::invariants::{self, Invariant};
use fsar_core::sim::Arch;
use fsar_cli::manifest;
use fsar_cli::output::{write_tables, Format};
use fsar_cli::plan::ExperimentPlan;
use fsar_cli::report::{runs_table, table3, table3_wide, table5, table6, table7, Table};
use fsar_cli::runner::{execute, workers, RunRecord, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "fsar", version, about = "Deterministic FSAR coordination experiments")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Opts {
    /// Base seed; run k of scenario s uses seed + 1000 s + k.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Runs per (architecture, scenario) cell.
    #[arg(long, global = true)]
    runs: Option<u64>,
    #[arg(long, global = true, value_delimiter = ',')]
    arch: Vec<Arch>,
    #[arg(long, global = true, value_delimiter = ',')]
    scenario: Vec<u8>,
    #[arg(long = "fleet-size", global = true, value_delimiter = ',')]
    fleet_size: Vec<usize>,
    /// Output directory for the manifest, traces and reports.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, value_delimiter = ',', default_values = ["csv", "md"])]
    format: Vec<Format>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Every architecture across every scenario.
    Matrix,
    /// Full FSAR against single-component removals.
    Ablation {
        /// Components to remove, one condition each.
        #[arg(long, value_delimiter = ',')]
        component: Vec<Component>,
    },
    /// The matrix repeated over fleet sizes.
    Scaling,
    /// Property suites over the FSAR matrix.
    Invariants,
    /// Re-run one manifest entry and compare its trace with the stored one.
    Replay {
        manifest: PathBuf,
        run_id: String,
        /// Print the regenerated trace.
        #[arg(long)]
        print: bool,
    },
}

impl Opts {
    fn apply(&self, mut plan: ExperimentPlan) -> ExperimentPlan {
        if let Some(s) = self.seed {
            plan.base_seed = s;
        }
        if let Some(r) = self.runs {
            plan.runs_per_cell = r;
        }
        if !self.arch.is_empty() {
            plan.architectures = self.arch.clone();
        }
        if !self.scenario.is_empty() {
            plan.scenarios = self.scenario.clone();
        }
        if !self.fleet_size.is_empty() {
            plan.fleet_sizes = self.fleet_size.clone();
        }
        plan.output_dir = Some(self.out.clone());
        plan
    }
}

fn run_plan(plan: &ExperimentPlan) -> Result<Vec<RunRecord>> {
    let runs = plan.runs()?;
    let n = workers();
    eprintln!("{} runs on {n} workers (set {WORKERS_ENV} to change)", runs.len());
    let start = Instant::now();
    let records = execute(&runs, n)?;
    eprintln!("finished in {:.1}s", start.elapsed().as_secs_f64());
    Ok(records)
}

fn emit(opts: &Opts, suite: &str, records: &[RunRecord], tables: Vec<(&str, Table)>) -> Result<()> {
    let dir = opts.out.join(suite);
    manifest::write(&dir, suite, records)?;
    let mut all = vec![("runs", runs_table(records))];
    all.extend(tables);
    write_tables(&dir, &all, records, &opts.format)?;
    for (name, t) in &all[1..] {
        if *name != "table3" {
            println!("{}", t.to_markdown());
        }
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn invariant_suite(opts: &Opts) -> Result<bool> {
    let mut plan = opts.apply(ExperimentPlan::matrix());
    plan.architectures = vec![Arch::Fsar];
    let records = run_plan(&plan)?;
    let mut counts: BTreeMap<Invariant, usize> = Invariant::ALL.iter().map(|i| (*i, 0)).collect();
    for r in &records {
        for v in invariants::check_run(&r.result) {
            if counts[&v.invariant] == 0 {
                eprintln!("{}: {v}", r.id);
            }
            *counts.get_mut(&v.invariant).expect("known invariant") += 1;
        }
    }
    for v in invariants::check_isolated_mode(plan.base_seed)? {
        eprintln!("isolated: {v}");
        *counts.get_mut(&v.invariant).expect("known invariant") += 1;
    }
    println!("| invariant | violations |\n|---|---|");
    for (i, c) in &counts {
        println!("| {i} | {c} |");
    }
    Ok(counts.values().all(|c| *c == 0))
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let opts = &cli.opts;
    match &cli.cmd {
        Cmd::Matrix => {
            let records = run_plan(&opts.apply(ExperimentPlan::matrix()))?;
            let tables = vec![
                ("table3", table3(&records)),
                ("table3_wide", table3_wide(&records)),
                ("table6", table6(&records)),
            ];
            emit(opts, "matrix", &records, tables)?;
        }
        Cmd::Ablation { component } => {
            let mut plan = opts.apply(ExperimentPlan::ablation());
            if !component.is_empty() {
                plan.ablations = std::iter::once(Ablation::none())
                    .chain(component.iter().map(|c| Ablation::of(&[*c])))
                    .collect();
            }
            let records = run_plan(&plan)?;
            emit(opts, "ablation", &records, vec![("table5", table5(&records))])?;
        }
        Cmd::Scaling => {
            let records = run_plan(&opts.apply(ExperimentPlan::scaling()))?;
            emit(opts, "scaling", &records, vec![("table7", table7(&records))])?;
        }
        Cmd::Invariants => {
            if !invariant_suite(opts)? {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Replay {
            manifest: path,
            run_id,
            print,
        } => {
            let r = manifest::replay(path, run_id)?;
            if *print {
                print!("{}", r.trace);
            }
            match r.identical {
                Some(true) => eprintln!("{}: identical", r.id),
                Some(false) => {
                    eprintln!("{}: trace differs from stored copy", r.id);
                    return Ok(ExitCode::FAILURE);
                }
                None => eprintln!("{}: no stored trace to compare", r.id),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
