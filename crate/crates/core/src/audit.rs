//! Append-only attributed audit trace. Every metric is computed from it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PolicyOutcome, RecoveryLevel, RequestId, RobotId, TrustScope};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubAgentRole {
    Planning,
    Execution,
    Communication,
    Recovery,
}

impl SubAgentRole {
    pub const ALL: [SubAgentRole; 4] = [
        SubAgentRole::Planning,
        SubAgentRole::Execution,
        SubAgentRole::Communication,
        SubAgentRole::Recovery,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "id")]
pub enum Principal {
    Robot(RobotId),
    Supervisor(String),
    Coordinator,
    SubAgent { host: RobotId, role: SubAgentRole },
    /// A fleet-layer component such as the registry or the recovery orchestrator.
    Federation(String),
}

impl Principal {
    pub fn robot(id: &RobotId) -> Principal {
        Principal::Robot(id.clone())
    }

    pub fn as_robot(&self) -> Option<&RobotId> {
        match self {
            Principal::Robot(r) => Some(r),
            _ => None,
        }
    }

    /// Robot that hosts this principal, if any.
    pub fn host(&self) -> Option<&RobotId> {
        match self {
            Principal::Robot(r) => Some(r),
            Principal::SubAgent { host, .. } => Some(host),
            _ => None,
        }
    }
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Principal::Robot(r) => write!(f, "{r}"),
            Principal::Supervisor(s) => write!(f, "{s}"),
            Principal::Coordinator => write!(f, "coordinator"),
            Principal::SubAgent { host, role } => write!(f, "{host}.{role:?}"),
            Principal::Federation(c) => write!(f, "federation.{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RequestIssued,
    CandidatesReturned,
    RequestEvaluated,
    ExecutionStarted,
    ExecutionCompleted,
    RecoveryTriggered,
    RecoveryEscalated,
    Reassignment,
    PolicyReviewRaised,
    SupervisorDecision,
    AvailabilityChanged,
    TrustChanged,
    AuthorityConflictObserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrincipalFields {
    pub request_origin: bool,
    pub execution_owner: bool,
    pub escalation_owner: bool,
}

const fn fields(request_origin: bool, execution_owner: bool, escalation_owner: bool) -> PrincipalFields {
    PrincipalFields {
        request_origin,
        execution_owner,
        escalation_owner,
    }
}

impl EventKind {
    pub const ALL: [EventKind; 13] = [
        EventKind::RequestIssued,
        EventKind::CandidatesReturned,
        EventKind::RequestEvaluated,
        EventKind::ExecutionStarted,
        EventKind::ExecutionCompleted,
        EventKind::RecoveryTriggered,
        EventKind::RecoveryEscalated,
        EventKind::Reassignment,
        EventKind::PolicyReviewRaised,
        EventKind::SupervisorDecision,
        EventKind::AvailabilityChanged,
        EventKind::TrustChanged,
        EventKind::AuthorityConflictObserved,
    ];

    /// Principal fields that must be present for the event to be appended under the guard.
    pub fn mandatory(self) -> PrincipalFields {
        match self {
            EventKind::RequestIssued => fields(true, false, false),
            EventKind::CandidatesReturned => fields(true, false, false),
            EventKind::RequestEvaluated => fields(true, true, false),
            EventKind::ExecutionStarted => fields(true, true, false),
            EventKind::ExecutionCompleted => fields(true, true, false),
            EventKind::RecoveryTriggered => fields(false, true, true),
            EventKind::RecoveryEscalated => fields(false, true, true),
            EventKind::Reassignment => fields(true, false, true),
            EventKind::PolicyReviewRaised => fields(true, true, true),
            EventKind::SupervisorDecision => fields(false, false, true),
            EventKind::AvailabilityChanged => fields(false, true, false),
            EventKind::TrustChanged => fields(false, false, true),
            EventKind::AuthorityConflictObserved => fields(false, true, false),
        }
    }

    /// Principal fields that an auditor must be able to recover for this kind.
    pub fn applicable(self) -> PrincipalFields {
        match self {
            EventKind::RequestIssued | EventKind::CandidatesReturned => fields(true, false, false),
            EventKind::RequestEvaluated | EventKind::ExecutionStarted | EventKind::ExecutionCompleted => {
                fields(true, true, false)
            }
            EventKind::RecoveryTriggered | EventKind::RecoveryEscalated => fields(true, true, true),
            EventKind::Reassignment => fields(true, false, true),
            EventKind::PolicyReviewRaised => fields(true, true, true),
            EventKind::SupervisorDecision => fields(false, false, true),
            EventKind::AvailabilityChanged => fields(false, true, false),
            EventKind::TrustChanged => fields(false, false, true),
            EventKind::AuthorityConflictObserved => fields(false, true, false),
        }
    }

    /// Kinds that count as coordination decisions for governance locality.
    pub fn is_decision(self) -> bool {
        !matches!(
            self,
            EventKind::CandidatesReturned
                | EventKind::AvailabilityChanged
                | EventKind::TrustChanged
                | EventKind::AuthorityConflictObserved
        )
    }
}

/// How the logged principal relates to the decision it records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    /// Logged by an intermediary that is not operationally responsible.
    #[serde(default, skip_serializing_if = "is_false")]
    pub relay: bool,
    /// The responsible principal is found only by traversing the fleet layer.
    #[serde(default, skip_serializing_if = "is_false")]
    pub traversal: bool,
    /// An intra-robot hop between sub-agents.
    #[serde(default, skip_serializing_if = "is_false")]
    pub internal_hop: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Attribution {
    pub const DIRECT: Attribution = Attribution {
        relay: false,
        traversal: false,
        internal_hop: false,
    };
    pub const RELAY: Attribution = Attribution {
        relay: true,
        traversal: false,
        internal_hop: false,
    };
    pub const TRAVERSAL: Attribution = Attribution {
        relay: false,
        traversal: true,
        internal_hop: false,
    };
    pub const HOP: Attribution = Attribution {
        relay: false,
        traversal: true,
        internal_hop: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStage {
    Query,
    Formulated,
    Hop,
    Dispatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum EvalOutcome {
    Accept,
    Defer { until: SimTime },
    Negotiate { counter: SimTime },
    Reject { reason: String },
}

impl EvalOutcome {
    pub fn is_accept(&self) -> bool {
        matches!(self, EvalOutcome::Accept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultTag {
    Success,
    Partial,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustCause {
    Initial,
    DowngradeFailure,
    DowngradeViolation,
    OperatorPromotion,
    Revocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Payload {
    Request {
        stage: RequestStage,
        capability: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Principal>,
    },
    Candidates {
        pattern: String,
        candidates: Vec<RobotId>,
    },
    Evaluation {
        capability: String,
        composed: PolicyOutcome,
        result: EvalOutcome,
    },
    ExecutionStart {
        capability: String,
        attempt: u32,
        expected_end: SimTime,
    },
    ExecutionEnd {
        capability: String,
        attempt: u32,
        result: ResultTag,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Recovery {
        failure_id: u64,
        level: RecoveryLevel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolved: Option<bool>,
    },
    Escalation {
        failure_id: u64,
        from: RecoveryLevel,
        to: RecoveryLevel,
    },
    Reassign {
        failure_id: u64,
        from: RobotId,
        to: RobotId,
    },
    Review {
        case_id: u64,
        capability: String,
        claimants: Vec<RobotId>,
    },
    Decision {
        case_id: u64,
        decision: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        winner: Option<RobotId>,
    },
    Availability {
        capability: String,
        from: String,
        to: String,
    },
    Trust {
        truster: RobotId,
        trustee: RobotId,
        pattern: String,
        from: TrustScope,
        to: TrustScope,
        cause: TrustCause,
    },
    Conflict {
        reason: String,
        claimants: Vec<Principal>,
    },
    Note {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub logical_time: SimTime,
    pub kind: EventKind,
    pub request_origin: Option<RobotId>,
    pub execution_owner: Option<RobotId>,
    pub escalation_owner: Option<Principal>,
    /// Principal that made or logged the decision.
    pub principal: Principal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<RequestId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default)]
    pub attribution: Attribution,
    pub payload: Payload,
}

impl AuditEvent {
    pub fn new(kind: EventKind, at: SimTime, principal: Principal, payload: Payload) -> Self {
        AuditEvent {
            seq: 0,
            logical_time: at,
            kind,
            request_origin: None,
            execution_owner: None,
            escalation_owner: None,
            principal,
            request: None,
            task_id: None,
            attribution: Attribution::DIRECT,
            payload,
        }
    }

    pub fn origin(mut self, r: &RobotId) -> Self {
        self.request_origin = Some(r.clone());
        self
    }

    pub fn owner(mut self, r: &RobotId) -> Self {
        self.execution_owner = Some(r.clone());
        self
    }

    pub fn escalation(mut self, p: Principal) -> Self {
        self.escalation_owner = Some(p);
        self
    }

    pub fn request(mut self, id: &RequestId) -> Self {
        self.task_id = Some(id.task_id.clone());
        self.request = Some(id.clone());
        self
    }

    pub fn task(mut self, task_id: &str) -> Self {
        self.task_id = Some(task_id.to_string());
        self
    }

    pub fn attributed(mut self, a: Attribution) -> Self {
        self.attribution = a;
        self
    }

    pub fn missing_mandatory(&self) -> Option<&'static str> {
        let m = self.kind.mandatory();
        if m.request_origin && self.request_origin.is_none() {
            return Some("request_origin");
        }
        if m.execution_owner && self.execution_owner.is_none() {
            return Some("execution_owner");
        }
        if m.escalation_owner && self.escalation_owner.is_none() {
            return Some("escalation_owner");
        }
        None
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("{kind:?} event is missing mandatory principal `{field}`")]
    MissingPrincipal { kind: EventKind, field: &'static str },
    #[error("event time {at} precedes the last appended event at {last}")]
    TimeRegression { at: SimTime, last: SimTime },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditTrace {
    pub events: Vec<AuditEvent>,
}

impl AuditTrace {
    pub fn new() -> Self {
        AuditTrace::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    fn next_seq(&self) -> u64 {
        self.events.last().map(|e| e.seq + 1).unwrap_or(0)
    }

    fn check_time(&self, event: &AuditEvent) -> Result<(), AuditError> {
        if let Some(last) = self.events.last() {
            if event.logical_time < last.logical_time {
                return Err(AuditError::TimeRegression {
                    at: event.logical_time,
                    last: last.logical_time,
                });
            }
        }
        Ok(())
    }

    /// Guarded append: rejects events that lack a mandatory principal.
    pub fn append(&mut self, mut event: AuditEvent) -> Result<u64, AuditError> {
        if let Some(field) = event.missing_mandatory() {
            return Err(AuditError::MissingPrincipal { kind: event.kind, field });
        }
        self.check_time(&event)?;
        event.seq = self.next_seq();
        self.events.push(event);
        Ok(self.events.last().unwrap().seq)
    }

    /// Append without the principal guard; used by the baseline architectures.
    pub fn append_unchecked(&mut self, mut event: AuditEvent) -> Result<u64, AuditError> {
        self.check_time(&event)?;
        event.seq = self.next_seq();
        self.events.push(event);
        Ok(self.events.last().unwrap().seq)
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &AuditEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("audit events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<AuditTrace, serde_json::Error> {
        let mut events = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            events.push(serde_json::from_str(line)?);
        }
        Ok(AuditTrace { events })
    }
}

/// Convenience for building audit events that carry request linkage.
pub fn audit_append(trace: &mut AuditTrace, event: AuditEvent) -> Result<u64, AuditError> {
    trace.append(event)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn completed(owner: Option<&str>) -> AuditEvent {
        let mut e = AuditEvent::new(
            EventKind::ExecutionCompleted,
            SimTime(10),
            Principal::Robot("robot_b".into()),
            Payload::ExecutionEnd {
                capability: "door.open.secure".into(),
                attempt: 0,
                result: ResultTag::Success,
                reason: None,
            },
        )
        .origin(&"robot_a".into());
        if let Some(o) = owner {
            e = e.owner(&o.into());
        }
        e
    }

    #[test]
    fn guarded_append_assigns_monotone_seq() {
        let mut t = AuditTrace::new();
        assert_eq!(t.append(completed(Some("robot_b"))).unwrap(), 0);
        assert_eq!(t.append(completed(Some("robot_b"))).unwrap(), 1);
    }

    #[test]
    fn missing_owner_is_rejected_under_guard() {
        let mut t = AuditTrace::new();
        let err = t.append(completed(None)).unwrap_err();
        assert_eq!(
            err,
            AuditError::MissingPrincipal {
                kind: EventKind::ExecutionCompleted,
                field: "execution_owner"
            }
        );
        assert!(t.is_empty());
    }

    #[test]
    fn coordinator_completion_passes_unchecked() {
        let mut t = AuditTrace::new();
        let mut e = completed(None);
        e.principal = Principal::Coordinator;
        e.request_origin = None;
        e.attribution = Attribution::RELAY;
        assert!(t.append_unchecked(e).is_ok());
    }

    #[test]
    fn time_cannot_regress() {
        let mut t = AuditTrace::new();
        t.append(completed(Some("robot_b"))).unwrap();
        let mut e = completed(Some("robot_b"));
        e.logical_time = SimTime(5);
        assert!(matches!(t.append(e), Err(AuditError::TimeRegression { .. })));
    }

    #[test]
    fn ndjson_round_trip() {
        let mut t = AuditTrace::new();
        t.append(completed(Some("robot_b"))).unwrap();
        t.append(completed(Some("robot_c"))).unwrap();
        let text = t.to_ndjson();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(AuditTrace::from_ndjson(&text).unwrap(), t);
    }

    #[test]
    fn mandatory_is_subset_of_applicable() {
        for k in EventKind::ALL {
            let m = k.mandatory();
            let a = k.applicable();
            assert!(!m.request_origin || a.request_origin, "{k:?}");
            assert!(!m.execution_owner || a.execution_owner, "{k:?}");
            assert!(!m.escalation_owner || a.escalation_owner, "{k:?}");
        }
    }
}
