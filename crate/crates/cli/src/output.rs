use std::fs;
use std::path::Path;

use anyhow::Result;
use clap::ValueEnum;
use serde::Serialize;

use crate::report::Table;
use crate::runner::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Md,
    Ndjson,
}

#[derive(Serialize)]
struct RunLine<'a> {
    id: &'a str,
    config: &'a fsar_core::sim::RunConfig,
    metrics: &'a fsar_core::metrics::MetricVector,
}

pub fn runs_ndjson(records: &[RunRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(&RunLine {
            id: &r.id,
            config: &r.result.config,
            metrics: &r.metrics,
        })?);
        s.push('\n');
    }
    Ok(s)
}

/// Writes each named table in the requested formats.
pub fn write_tables(dir: &Path, tables: &[(&str, Table)], records: &[RunRecord], formats: &[Format]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for f in formats {
        match f {
            Format::Csv => {
                for (name, t) in tables {
                    fs::write(dir.join(format!("{name}.csv")), t.to_csv()?)?;
                }
            }
            Format::Md => {
                let md: Vec<String> = tables.iter().map(|(_, t)| t.to_markdown()).collect();
                fs::write(dir.join("report.md"), md.join("\n"))?;
            }
            Format::Ndjson => fs::write(dir.join("runs.ndjson"), runs_ndjson(records)?)?,
        }
    }
    Ok(())
}
