//! Trace-level coordination and architecture invariants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::audit::{AuditEvent, EvalOutcome, EventKind, Payload, Principal};
use crate::metrics;
use crate::model::{escalate_recovery_level, PolicyOutcome, RecoveryLevel, RequestId, RobotId};
use crate::sim::fleet::Role;
use crate::sim::{run_scenario, Arch, Outage, RunConfig, RunResult, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Invariant {
    /// One fleet-visible principal per robot's executions.
    I1,
    /// The callee owns every execution it performs.
    I2,
    /// No execution proceeds under a composed deny.
    I3,
    /// Recovery escalates outward without skipping levels.
    I4,
    /// Every event carries its mandatory principals.
    I5,
    /// Robots keep operating with the federation layer down.
    A1,
    /// Denials and reviews are escalated, never silently overridden.
    A3,
    /// Requesters never act on a callee's runtime state.
    A4,
    /// Every applicable principal is recoverable from the trace.
    A5,
    /// A deferred request never starts before its deferral time.
    Defer,
}

impl Invariant {
    pub const ALL: [Invariant; 10] = [
        Invariant::I1,
        Invariant::I2,
        Invariant::I3,
        Invariant::I4,
        Invariant::I5,
        Invariant::A1,
        Invariant::A3,
        Invariant::A4,
        Invariant::A5,
        Invariant::Defer,
    ];
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: Invariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.seq {
            Some(s) => write!(f, "{} at #{s}: {}", self.invariant, self.detail),
            None => write!(f, "{}: {}", self.invariant, self.detail),
        }
    }
}

fn violation(invariant: Invariant, e: Option<&AuditEvent>, detail: impl Into<String>) -> Violation {
    Violation {
        invariant,
        seq: e.map(|e| e.seq),
        detail: detail.into(),
    }
}

fn is_execution(kind: EventKind) -> bool {
    matches!(kind, EventKind::ExecutionStarted | EventKind::ExecutionCompleted)
}

/// Runs every trace-level check against one run.
pub fn check_run(result: &RunResult) -> Vec<Violation> {
    let mut out = Vec::new();
    out.extend(principal_singleton(result));
    out.extend(executor_ownership(result));
    out.extend(no_execution_on_deny(result));
    out.extend(monotone_escalation(result));
    out.extend(mandatory_principals(result));
    out.extend(no_silent_override(result));
    out.extend(defer_respected(result));
    out
}

fn principal_singleton(result: &RunResult) -> Vec<Violation> {
    let mut seen: BTreeMap<&RobotId, BTreeSet<&Principal>> = BTreeMap::new();
    for e in result.trace.events.iter().filter(|e| is_execution(e.kind)) {
        if let Some(owner) = &e.execution_owner {
            seen.entry(owner).or_default().insert(&e.principal);
        }
    }
    seen.into_iter()
        .filter(|(r, ps)| ps.len() != 1 || ps.iter().next().and_then(|p| p.as_robot()) != Some(*r))
        .map(|(r, ps)| {
            let names: Vec<String> = ps.iter().map(|p| p.to_string()).collect();
            violation(Invariant::I1, None, format!("{r} executions attributed to {names:?}"))
        })
        .collect()
}

fn executor_ownership(result: &RunResult) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut accepted: BTreeMap<&RequestId, &Principal> = BTreeMap::new();
    for e in &result.trace.events {
        match (&e.kind, &e.payload, &e.request) {
            (EventKind::RequestEvaluated, Payload::Evaluation { result, .. }, Some(req)) if result.is_accept() => {
                accepted.insert(req, &e.principal);
            }
            (EventKind::ExecutionCompleted, _, Some(req)) => {
                if e.execution_owner.as_ref() != Some(&req.executor) {
                    out.push(violation(Invariant::I2, Some(e), "completion owner is not the callee"));
                }
                if let Some(p) = accepted.get(req) {
                    if p.as_robot() != Some(&req.executor) {
                        out.push(violation(Invariant::I2, Some(e), format!("accepted by {p}, not the callee")));
                    }
                }
            }
            _ => {}
        }
        if is_execution(e.kind) || e.kind == EventKind::AvailabilityChanged {
            let owner = e.execution_owner.as_ref();
            if e.principal.as_robot().is_some() && e.principal.as_robot() != owner {
                out.push(violation(Invariant::A4, Some(e), format!("{} acted on another robot's state", e.principal)));
            }
        }
    }
    out
}

fn no_execution_on_deny(result: &RunResult) -> Vec<Violation> {
    let n = metrics::policy_violations(&result.trace, &result.policies, &result.contexts);
    if n > 0.0 {
        vec![violation(Invariant::I3, None, format!("{n} executions replay to deny"))]
    } else {
        Vec::new()
    }
}

fn monotone_escalation(result: &RunResult) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut level: BTreeMap<u64, RecoveryLevel> = BTreeMap::new();
    for e in &result.trace.events {
        match &e.payload {
            Payload::Recovery { failure_id, level: l, .. } => {
                let cur = *level.entry(*failure_id).or_insert(*l);
                if *l < cur || l.rank() > cur.rank() + 1 {
                    out.push(violation(Invariant::I4, Some(e), format!("failure {failure_id} moved {cur:?} to {l:?}")));
                }
                level.insert(*failure_id, cur.max(*l));
            }
            Payload::Escalation { failure_id, from, to } => {
                if escalate_recovery_level(*from).ok() != Some(*to) {
                    out.push(violation(Invariant::I4, Some(e), format!("skip {from:?} to {to:?}")));
                }
                if let Some(cur) = level.get(failure_id) {
                    if from < cur {
                        out.push(violation(Invariant::I4, Some(e), format!("failure {failure_id} escalated backwards")));
                    }
                }
                level.insert(*failure_id, *to);
            }
            _ => {}
        }
    }
    out
}

fn mandatory_principals(result: &RunResult) -> Vec<Violation> {
    result
        .trace
        .events
        .iter()
        .filter_map(|e| {
            e.missing_mandatory()
                .map(|f| violation(Invariant::I5, Some(e), format!("{:?} lacks {f}", e.kind)))
        })
        .chain(
            result
                .trace
                .events
                .iter()
                .filter(|e| !metrics::recoverable(e))
                .map(|e| violation(Invariant::A5, Some(e), format!("{:?} principals not recoverable", e.kind))),
        )
        .collect()
}

fn no_silent_override(result: &RunResult) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut reviewed: BTreeSet<&str> = BTreeSet::new();
    for e in &result.trace.events {
        if e.kind == EventKind::PolicyReviewRaised {
            if let Some(t) = &e.task_id {
                reviewed.insert(t);
            }
        }
        let Payload::Evaluation { composed, result: r, .. } = &e.payload else { continue };
        match composed {
            PolicyOutcome::Deny if !matches!(r, EvalOutcome::Reject { .. }) => {
                out.push(violation(Invariant::A3, Some(e), "deny did not reject"));
            }
            PolicyOutcome::Review if r.is_accept() => {
                let task = e.task_id.as_deref().or(e.request.as_ref().map(|q| q.task_id.as_str()));
                if !task.is_some_and(|t| reviewed.contains(t)) {
                    out.push(violation(Invariant::A3, Some(e), "review accepted without escalation"));
                }
            }
            _ => {}
        }
    }
    out
}

fn defer_respected(result: &RunResult) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut until: BTreeMap<&RequestId, crate::SimTime> = BTreeMap::new();
    for e in &result.trace.events {
        match (&e.payload, &e.request) {
            (Payload::Evaluation { result: EvalOutcome::Defer { until: u }, .. }, Some(req)) => {
                until.insert(req, *u);
            }
            (Payload::ExecutionStart { .. }, Some(req)) => {
                if let Some(u) = until.get(req) {
                    if e.logical_time < *u {
                        out.push(violation(Invariant::Defer, Some(e), "started before deferral time"));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Runs a scenario with the federation layer down for the whole run.
pub fn isolated_run(scenario: u8, owner: Option<Role>, seed: u64) -> Result<RunResult, SimError> {
    let mut cfg = RunConfig::new(Arch::Fsar, scenario, 4, seed)?;
    cfg.federation_outage = Some(Outage {
        start: 0.0,
        end: f64::MAX,
    });
    if let Some(role) = owner {
        let caps = role.capabilities();
        for t in &mut cfg.scenario.tasks {
            t.owner = role;
            t.segments.retain(|s| caps.contains(&s.capability.as_str()));
        }
        cfg.scenario.tasks.retain(|t| !t.segments.is_empty());
        cfg.scenario.injection.p_fail = 0.0;
        cfg.scenario.injection.violation = None;
    }
    run_scenario(&cfg)
}

/// Isolated operation: local-only work succeeds and a capability gap fails locally
/// with no fleet-layer involvement.
pub fn check_isolated_mode(seed: u64) -> Result<Vec<Violation>, SimError> {
    let mut out = Vec::new();
    let local = isolated_run(1, Some(Role::B), seed)?;
    if local.tasks.iter().any(|t| !t.success) {
        out.push(violation(Invariant::A1, None, "local-only task failed while isolated"));
    }
    let gap = isolated_run(1, None, seed)?;
    for t in &gap.tasks {
        if t.success || t.reason.as_deref() != Some("no_federation") {
            out.push(violation(Invariant::A1, None, format!("{} ended {:?} while isolated", t.task_id, t.reason)));
        }
    }
    for r in [&local, &gap] {
        if let Some(e) = r.trace.events.iter().find(|e| matches!(e.principal, Principal::Federation(_))) {
            out.push(violation(Invariant::A1, Some(e), "fleet layer acted while offline"));
        }
        out.extend(check_run(r));
    }
    Ok(out)
}
