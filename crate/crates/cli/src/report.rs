use std::collections::BTreeMap;

use anyhow::Result;
use fsar_core::metrics::Metric;
use fsar_core::sim::{Arch, RunConfig};
use fsar_core::stats::{self, StatResult};

use crate::runner::RunRecord;

/// Bumped whenever a report's column set changes.
pub const REPORT_SCHEMA: u32 = 1;

pub const RUNS_HEADER: [&str; 14] = [
    "id",
    "arch",
    "scenario",
    "fleet_size",
    "ablation",
    "seed",
    "task_success",
    "governance_locality",
    "authority_conflicts",
    "audit_attributability",
    "recovery_containment",
    "reassignment_latency",
    "policy_violations",
    "human_interventions",
];
pub const TABLE3_HEADER: [&str; 6] = ["arch", "metric", "mean", "std", "ci95", "n"];
pub const TABLE5_HEADER: [&str; 9] = [
    "condition",
    "task_success",
    "s1_success",
    "s3_success",
    "governance_locality",
    "authority_conflicts",
    "recovery_containment",
    "policy_violations",
    "human_interventions",
];
pub const TABLE6_HEADER: [&str; 9] = [
    "comparison",
    "metric",
    "n",
    "t",
    "p",
    "cohens_d",
    "sign",
    "wilcoxon_w",
    "wilcoxon_p",
];
pub const TABLE7_HEADER: [&str; 8] = [
    "fleet_size",
    "arch",
    "task_success",
    "governance_locality",
    "authority_conflicts",
    "d_success",
    "d_locality",
    "d_conflicts",
];

/// Metrics compared pairwise in the significance table.
pub const COMPARED: [Metric; 4] = [
    Metric::GovernanceLocality,
    Metric::AuthorityConflicts,
    Metric::AuditAttributability,
    Metric::TaskSuccess,
];

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(title: &str, header: &[&str]) -> Self {
        Table {
            title: title.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("### {}\n\n| {} |\n|", self.title, self.header.join(" | "));
        for _ in &self.header {
            s.push_str("---|");
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("| {} |\n", r.join(" | ")));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        mean,
        std,
        ci95: 1.96 * std / (n as f64).sqrt(),
        n,
    })
}

pub fn values<'a>(records: impl IntoIterator<Item = &'a RunRecord>, m: Metric) -> Vec<f64> {
    records.into_iter().filter_map(|r| r.metrics.get(m)).collect()
}

/// Mean of a metric over the selected runs, skipping runs where it is undefined.
pub fn mean<'a>(records: impl IntoIterator<Item = &'a RunRecord>, m: Metric) -> Option<f64> {
    summarize(&values(records, m)).map(|s| s.mean)
}

pub fn select<'a>(records: &'a [RunRecord], pred: impl Fn(&RunConfig) -> bool) -> Vec<&'a RunRecord> {
    records.iter().filter(|r| pred(&r.result.config)).collect()
}

fn fmt3(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
}

fn archs(records: &[RunRecord]) -> Vec<Arch> {
    let mut a: Vec<Arch> = records.iter().map(|r| r.result.config.arch).collect();
    a.sort();
    a.dedup();
    a
}

pub fn runs_table(records: &[RunRecord]) -> Table {
    let mut t = Table::new("Per-run metrics", &RUNS_HEADER);
    for r in records {
        let c = &r.result.config;
        let mut row = vec![
            r.id.clone(),
            c.arch.to_string(),
            c.scenario.id.to_string(),
            c.fleet_size.to_string(),
            c.ablation.label(),
            c.seed.to_string(),
        ];
        row.extend(Metric::ALL.iter().map(|m| {
            r.metrics
                .get(*m)
                .map(|v| format!("{v}"))
                .unwrap_or_default()
        }));
        t.rows.push(row);
    }
    t
}

/// Architecture comparison: one row per (architecture, metric).
pub fn table3(records: &[RunRecord]) -> Table {
    let mut t = Table::new("Architecture comparison", &TABLE3_HEADER);
    for arch in archs(records) {
        let sel = select(records, |c| c.arch == arch);
        for m in Metric::ALL {
            let Some(s) = summarize(&values(sel.iter().copied(), m)) else { continue };
            t.rows.push(vec![
                arch.to_string(),
                m.as_str().into(),
                format!("{:.4}", s.mean),
                format!("{:.4}", s.std),
                format!("{:.4}", s.ci95),
                s.n.to_string(),
            ]);
        }
    }
    t
}

/// Wide rendering of the architecture comparison for reading.
pub fn table3_wide(records: &[RunRecord]) -> Table {
    let mut header = vec!["arch"];
    header.extend(Metric::ALL.iter().map(|m| m.as_str()));
    let mut t = Table::new("Architecture comparison (mean ± 95% CI)", &header);
    for arch in archs(records) {
        let sel = select(records, |c| c.arch == arch);
        let mut row = vec![arch.to_string()];
        for m in Metric::ALL {
            row.push(match summarize(&values(sel.iter().copied(), m)) {
                Some(s) => format!("{:.3} ± {:.3}", s.mean, s.ci95),
                None => "-".into(),
            });
        }
        t.rows.push(row);
    }
    t
}

/// Ablation suite: one row per condition, in first-seen order.
pub fn table5(records: &[RunRecord]) -> Table {
    let mut t = Table::new("Ablation", &TABLE5_HEADER);
    let mut labels: Vec<String> = Vec::new();
    for r in records {
        let l = r.result.config.ablation.label();
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    for label in labels {
        let sel = select(records, |c| c.ablation.label() == label);
        let scen = |id: u8| mean(sel.iter().copied().filter(|r| r.result.config.scenario.id == id), Metric::TaskSuccess);
        t.rows.push(vec![
            label.clone(),
            fmt3(mean(sel.iter().copied(), Metric::TaskSuccess)),
            fmt3(scen(1)),
            fmt3(scen(3)),
            fmt3(mean(sel.iter().copied(), Metric::GovernanceLocality)),
            fmt3(mean(sel.iter().copied(), Metric::AuthorityConflicts)),
            fmt3(mean(sel.iter().copied(), Metric::RecoveryContainment)),
            fmt3(mean(sel.iter().copied(), Metric::PolicyViolations)),
            fmt3(mean(sel.iter().copied(), Metric::HumanInterventions)),
        ]);
    }
    t
}

type PairKey = (u8, u64, usize, String);

fn keyed(records: &[RunRecord], arch: Arch, m: Metric) -> BTreeMap<PairKey, f64> {
    records
        .iter()
        .filter(|r| r.result.config.arch == arch)
        .filter_map(|r| {
            let c = &r.result.config;
            r.metrics
                .get(m)
                .map(|v| ((c.scenario.id, c.seed, c.fleet_size, c.ablation.label()), v))
        })
        .collect()
}

/// Pairs runs of two architectures by (scenario, seed, fleet size, ablation).
pub fn paired(records: &[RunRecord], a: Arch, b: Arch, m: Metric) -> (Vec<f64>, Vec<f64>) {
    let xs = keyed(records, a, m);
    let ys = keyed(records, b, m);
    xs.iter()
        .filter_map(|(k, x)| ys.get(k).map(|y| (*x, *y)))
        .unzip()
}

pub fn compare(records: &[RunRecord], a: Arch, b: Arch, m: Metric) -> Option<StatResult> {
    let (xs, ys) = paired(records, a, b, m);
    stats::compare(&xs, &ys).ok()
}

/// Significance of the federated architecture against each baseline.
pub fn table6(records: &[RunRecord]) -> Table {
    let mut t = Table::new("Paired significance tests", &TABLE6_HEADER);
    for other in [Arch::Cfc, Arch::Dhma] {
        for m in COMPARED {
            let Some(s) = compare(records, Arch::Fsar, other, m) else { continue };
            t.rows.push(vec![
                format!("fsar_vs_{other}"),
                m.as_str().into(),
                s.n.to_string(),
                format!("{:.4}", s.t_statistic),
                format!("{:.3e}", s.p_value),
                format!("{:.3}", s.cohens_d),
                s.sign.to_string(),
                format!("{:.1}", s.wilcoxon_w),
                format!("{:.3e}", s.wilcoxon_p),
            ]);
        }
    }
    t
}

/// Scaling suite: per size and architecture, with deltas from the smallest size.
pub fn table7(records: &[RunRecord]) -> Table {
    let mut t = Table::new("Scaling", &TABLE7_HEADER);
    let mut sizes: Vec<usize> = records.iter().map(|r| r.result.config.fleet_size).collect();
    sizes.sort();
    sizes.dedup();
    let Some(&base) = sizes.first() else { return t };
    let cols = [Metric::TaskSuccess, Metric::GovernanceLocality, Metric::AuthorityConflicts];
    for arch in archs(records) {
        let at = |n: usize, m: Metric| mean(select(records, |c| c.arch == arch && c.fleet_size == n), m);
        for &n in &sizes {
            let mut row = vec![n.to_string(), arch.to_string()];
            row.extend(cols.iter().map(|m| fmt3(at(n, *m))));
            row.extend(cols.iter().map(|m| {
                let d = at(n, *m).zip(at(base, *m)).map(|(x, y)| x - y);
                d.map(|v| format!("{v:+.3}")).unwrap_or_else(|| "-".into())
            }));
            t.rows.push(row);
        }
    }
    t
}
