//! Post-hoc metrics. Everything except task success is computed from the audit trace alone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::audit::{AuditEvent, AuditTrace, EventKind, Payload, Principal};
use crate::model::{compose_policy, EcmContract, EcmDescriptor, PolicyOutcome, PolicyScope, RecoveryLevel, RequestId, RobotId, TaskContext};
use crate::sim::{RunResult, TaskOutcome};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TaskSuccess,
    GovernanceLocality,
    AuthorityConflicts,
    AuditAttributability,
    RecoveryContainment,
    ReassignmentLatency,
    PolicyViolations,
    HumanInterventions,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::TaskSuccess,
        Metric::GovernanceLocality,
        Metric::AuthorityConflicts,
        Metric::AuditAttributability,
        Metric::RecoveryContainment,
        Metric::ReassignmentLatency,
        Metric::PolicyViolations,
        Metric::HumanInterventions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::TaskSuccess => "task_success",
            Metric::GovernanceLocality => "governance_locality",
            Metric::AuthorityConflicts => "authority_conflicts",
            Metric::AuditAttributability => "audit_attributability",
            Metric::RecoveryContainment => "recovery_containment",
            Metric::ReassignmentLatency => "reassignment_latency",
            Metric::PolicyViolations => "policy_violations",
            Metric::HumanInterventions => "human_interventions",
        }
    }
}

/// One run's metrics. Recovery metrics are absent for runs without failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub task_success: f64,
    pub governance_locality: f64,
    pub authority_conflicts: f64,
    pub audit_attributability: f64,
    pub recovery_containment: Option<f64>,
    pub reassignment_latency: Option<f64>,
    pub policy_violations: f64,
    pub human_interventions: f64,
}

impl MetricVector {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::TaskSuccess => Some(self.task_success),
            Metric::GovernanceLocality => Some(self.governance_locality),
            Metric::AuthorityConflicts => Some(self.authority_conflicts),
            Metric::AuditAttributability => Some(self.audit_attributability),
            Metric::RecoveryContainment => self.recovery_containment,
            Metric::ReassignmentLatency => self.reassignment_latency,
            Metric::PolicyViolations => Some(self.policy_violations),
            Metric::HumanInterventions => Some(self.human_interventions),
        }
    }
}

pub fn compute(result: &RunResult) -> MetricVector {
    let trace = &result.trace;
    MetricVector {
        task_success: task_success(&result.tasks),
        governance_locality: governance_locality(trace),
        authority_conflicts: authority_conflicts(trace),
        audit_attributability: audit_attributability(trace),
        recovery_containment: recovery_containment(trace),
        reassignment_latency: reassignment_latency(trace),
        policy_violations: policy_violations(trace, &result.policies, &result.contexts),
        human_interventions: human_interventions(trace),
    }
}

/// Mean of the values that are present; `None` if none are.
pub fn mean_present(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn aggregate(runs: &[MetricVector], m: Metric) -> Option<f64> {
    mean_present(runs.iter().map(|r| r.get(m)))
}

pub fn task_success(tasks: &[TaskOutcome]) -> f64 {
    if tasks.is_empty() {
        return 0.0;
    }
    tasks.iter().filter(|t| t.success).count() as f64 / tasks.len() as f64
}

/// Key under which several principals may claim the same decision.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DecisionKey {
    pub kind: EventKind,
    pub request: Option<RequestId>,
    pub task: Option<String>,
    pub detail: String,
}

pub fn decision_key(e: &AuditEvent) -> DecisionKey {
    let detail = match &e.payload {
        Payload::Request { stage, capability, .. } => format!("{stage:?}:{capability}"),
        Payload::Candidates { pattern, .. } => pattern.clone(),
        Payload::Evaluation { capability, .. } => capability.clone(),
        Payload::ExecutionStart { capability, attempt, .. } | Payload::ExecutionEnd { capability, attempt, .. } => {
            format!("{capability}#{attempt}")
        }
        Payload::Recovery {
            failure_id, resolved, ..
        } => format!("{failure_id}:{}", resolved.is_some()),
        Payload::Escalation { failure_id, from, to } => format!("{failure_id}:{from:?}>{to:?}"),
        Payload::Reassign { failure_id, .. } => failure_id.to_string(),
        Payload::Review { case_id, .. } | Payload::Decision { case_id, .. } => case_id.to_string(),
        Payload::Availability { capability, .. } => capability.clone(),
        Payload::Trust { truster, trustee, .. } => format!("{truster}>{trustee}"),
        Payload::Conflict { reason, .. } => reason.clone(),
        Payload::Note { text } => text.clone(),
    };
    DecisionKey {
        kind: e.kind,
        request: e.request.clone(),
        task: e.task_id.clone(),
        detail,
    }
}

fn principals_by_group<'a>(events: impl Iterator<Item = &'a AuditEvent>) -> BTreeMap<DecisionKey, BTreeSet<&'a Principal>> {
    let mut groups: BTreeMap<DecisionKey, BTreeSet<&Principal>> = BTreeMap::new();
    for e in events {
        groups.entry(decision_key(e)).or_default().insert(&e.principal);
    }
    groups
}

/// Fraction of decision events taken directly by a single responsible principal.
pub fn governance_locality(trace: &AuditTrace) -> f64 {
    let decisions: Vec<&AuditEvent> = trace.events.iter().filter(|e| e.kind.is_decision()).collect();
    if decisions.is_empty() {
        return 1.0;
    }
    let groups = principals_by_group(decisions.iter().copied());
    let local = decisions
        .iter()
        .filter(|e| {
            let a = e.attribution;
            !a.relay && !a.traversal && !a.internal_hop && groups[&decision_key(e)].len() == 1
        })
        .count();
    local as f64 / decisions.len() as f64
}

/// Kinds for which two principals logging the same key amounts to two claims of one authority.
fn is_claim(kind: EventKind) -> bool {
    matches!(
        kind,
        EventKind::RequestEvaluated
            | EventKind::ExecutionStarted
            | EventKind::ExecutionCompleted
            | EventKind::RecoveryTriggered
            | EventKind::RecoveryEscalated
            | EventKind::Reassignment
    )
}

pub fn duplicate_claims(trace: &AuditTrace) -> usize {
    principals_by_group(trace.events.iter().filter(|e| is_claim(e.kind)))
        .values()
        .map(|p| p.len() - 1)
        .sum()
}

fn executor_of(e: &AuditEvent) -> Option<&RobotId> {
    e.execution_owner.as_ref().or(e.request.as_ref().map(|r| &r.executor))
}

fn origin_of(e: &AuditEvent) -> Option<&RobotId> {
    e.request_origin.as_ref().or(e.request.as_ref().map(|r| &r.requester))
}

/// Execution intervals `[start, end)` on one executor that overlap an earlier one.
pub fn overlapping_executions(trace: &AuditTrace) -> usize {
    let mut intervals: BTreeMap<&RobotId, Vec<(SimTime, SimTime)>> = BTreeMap::new();
    let mut ends: BTreeMap<(Option<&RequestId>, Option<&String>, u32, &RobotId), Vec<SimTime>> = BTreeMap::new();
    for e in &trace.events {
        if let (EventKind::ExecutionCompleted, Payload::ExecutionEnd { attempt, .. }, Some(x)) = (e.kind, &e.payload, executor_of(e)) {
            ends.entry((e.request.as_ref(), e.task_id.as_ref(), *attempt, x))
                .or_default()
                .push(e.logical_time);
        }
    }
    for e in &trace.events {
        if let (EventKind::ExecutionStarted, Payload::ExecutionStart { attempt, .. }, Some(x)) = (e.kind, &e.payload, executor_of(e)) {
            let end = ends
                .get(&(e.request.as_ref(), e.task_id.as_ref(), *attempt, x))
                .and_then(|v| v.iter().find(|t| **t >= e.logical_time).copied())
                .unwrap_or(SimTime(u64::MAX));
            intervals.entry(x).or_default().push((e.logical_time, end));
        }
    }
    let mut n = 0;
    for list in intervals.values() {
        for (i, (s, _)) in list.iter().enumerate() {
            if list[..i].iter().any(|(s0, e0)| s0 <= s && s < e0) {
                n += 1;
            }
        }
    }
    n
}

pub fn authority_conflicts(trace: &AuditTrace) -> f64 {
    let observed = trace.of_kind(EventKind::AuthorityConflictObserved).count();
    (observed + overlapping_executions(trace) + duplicate_claims(trace)) as f64
}

/// Whether every applicable principal is present on the event or reachable through its request link.
pub fn recoverable(e: &AuditEvent) -> bool {
    let a = e.kind.applicable();
    (!a.request_origin || origin_of(e).is_some())
        && (!a.execution_owner || executor_of(e).is_some())
        && (!a.escalation_owner || e.escalation_owner.is_some())
}

/// Whether an auditor can recover every applicable principal without walking the fleet layer.
pub fn attributable(e: &AuditEvent) -> bool {
    recoverable(e) && !e.attribution.traversal && !e.attribution.internal_hop
}

pub fn audit_attributability(trace: &AuditTrace) -> f64 {
    if trace.is_empty() {
        return 1.0;
    }
    trace.events.iter().filter(|e| attributable(e)).count() as f64 / trace.len() as f64
}

struct FailureRecord {
    detected: SimTime,
    resolutions: Vec<(RecoveryLevel, SimTime)>,
    first_handoff: Option<SimTime>,
}

fn failures(trace: &AuditTrace) -> BTreeMap<u64, FailureRecord> {
    let mut out: BTreeMap<u64, FailureRecord> = BTreeMap::new();
    for e in &trace.events {
        match &e.payload {
            Payload::Recovery {
                failure_id,
                resolved: None,
                ..
            } => {
                out.entry(*failure_id).or_insert(FailureRecord {
                    detected: e.logical_time,
                    resolutions: Vec::new(),
                    first_handoff: None,
                });
            }
            Payload::Recovery {
                failure_id,
                level,
                resolved: Some(true),
            } => {
                if let Some(f) = out.get_mut(failure_id) {
                    f.resolutions.push((*level, e.logical_time));
                }
            }
            Payload::Decision { case_id, decision, .. } if decision == "manual_recovery" => {
                if let Some(f) = out.get_mut(case_id) {
                    f.resolutions.push((RecoveryLevel::Human, e.logical_time));
                }
            }
            Payload::Escalation { failure_id, .. } | Payload::Reassign { failure_id, .. } => {
                if let Some(f) = out.get_mut(failure_id) {
                    f.first_handoff.get_or_insert(e.logical_time);
                }
            }
            _ => {}
        }
    }
    out
}

/// Lowest level at which each failure was resolved, keyed by failure id.
pub fn resolution_levels(trace: &AuditTrace) -> BTreeMap<u64, Option<RecoveryLevel>> {
    failures(trace)
        .into_iter()
        .map(|(id, r)| (id, r.resolutions.iter().map(|(l, _)| *l).min()))
        .collect()
}

/// Fraction of failures resolved at the local or peer level.
pub fn recovery_containment(trace: &AuditTrace) -> Option<f64> {
    let f = failures(trace);
    if f.is_empty() {
        return None;
    }
    let contained = f
        .values()
        .filter(|r| {
            r.resolutions
                .iter()
                .map(|(l, _)| *l)
                .min()
                .is_some_and(|l| l <= RecoveryLevel::Peer)
        })
        .count();
    Some(contained as f64 / f.len() as f64)
}

/// Mean seconds from detection to the first hand-off, or to local resolution if none.
pub fn reassignment_latency(trace: &AuditTrace) -> Option<f64> {
    let lat: Vec<f64> = failures(trace)
        .values()
        .filter_map(|r| {
            let end = r
                .first_handoff
                .or_else(|| r.resolutions.iter().map(|(_, t)| *t).min())?;
            Some(end.saturating_sub(r.detected).secs())
        })
        .collect();
    (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64)
}

/// Executions whose full composed policy, replayed after the fact, is `deny`.
pub fn policy_violations(
    trace: &AuditTrace,
    policies: &BTreeMap<RobotId, PolicyScope>,
    contexts: &BTreeMap<String, TaskContext>,
) -> f64 {
    let allow = PolicyScope::allow_all();
    trace
        .of_kind(EventKind::ExecutionStarted)
        .filter(|e| {
            let (Payload::ExecutionStart { capability, .. }, Some(task)) = (&e.payload, e.task_id.as_ref()) else {
                return false;
            };
            let (Some(ctx), Some(origin), Some(owner)) = (contexts.get(task), origin_of(e), executor_of(e)) else {
                return false;
            };
            let Ok(ecm) = EcmDescriptor::new(capability.clone(), EcmContract::with_duration(1.0, 1.0)) else {
                return false;
            };
            let rp = policies.get(origin).unwrap_or(&allow);
            let ep = policies.get(owner).unwrap_or(&allow);
            compose_policy(rp, ep, &ecm, ctx) == PolicyOutcome::Deny
        })
        .count() as f64
}

/// 1 if the fleet supervisor decided anything during the run.
pub fn human_interventions(trace: &AuditTrace) -> f64 {
    let fleet = Principal::Supervisor(crate::federation::FLEET_SUPERVISOR.into());
    if trace.of_kind(EventKind::SupervisorDecision).any(|e| e.principal == fleet) {
        1.0
    } else {
        0.0
    }
}
