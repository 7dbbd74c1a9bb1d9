//! Federation layer: governed registry access, authority evaluation and
//! revocation, supervisor routing and recovery orchestration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{Attribution, AuditEvent, EventKind, Payload, Principal};
use crate::model::{
    compose_policy, escalate_recovery_level, trust_sufficient, AuditLevel, AuthorityTuple, CapabilityRequest,
    EcmDescriptor, OverrideLevel, PolicyOutcome, PolicyScope, RecoveryLevel, RequestId, RobotId, TaskContext,
    TrustScope,
};
use crate::registry::{Candidate, CandidateQuery, QueryGates, QueryScope, Registry};
use crate::runtime::RobotRuntime;
use crate::time::SimTime;
use crate::trust::{TrustChange, TrustMatrix};

pub const FLEET_SUPERVISOR: &str = "H_F";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Trust,
    PolicyComposition,
    LayeredRecovery,
    Registry,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Trust,
        Component::PolicyComposition,
        Component::LayeredRecovery,
        Component::Registry,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Trust => "trust",
            Component::PolicyComposition => "policy_composition",
            Component::LayeredRecovery => "layered_recovery",
            Component::Registry => "registry",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown ablation component `{0}`")]
pub struct UnknownComponent(pub String);

impl FromStr for Component {
    type Err = UnknownComponent;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_start_matches('-');
        Component::ALL
            .into_iter()
            .find(|c| c.as_str() == s || (s == "policy" && *c == Component::PolicyComposition))
            .ok_or_else(|| UnknownComponent(s.to_string()))
    }
}

/// Set of disabled federation components.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ablation(pub BTreeSet<Component>);

impl Ablation {
    pub fn none() -> Self {
        Ablation::default()
    }

    pub fn of(components: &[Component]) -> Self {
        Ablation(components.iter().copied().collect())
    }

    pub fn parse(names: &[&str]) -> Result<Self, UnknownComponent> {
        names.iter().map(|n| n.parse()).collect::<Result<BTreeSet<_>, _>>().map(Ablation)
    }

    pub fn disables(&self, c: Component) -> bool {
        self.0.contains(&c)
    }

    pub fn label(&self) -> String {
        if self.0.is_empty() {
            "full".to_string()
        } else {
            self.0.iter().map(|c| format!("-{c}")).collect::<Vec<_>>().join(",")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "arg")]
pub enum DecisionRule {
    ApproveFirst,
    ApproveSecond,
    Approve(RobotId),
    RejectAll,
    PrioritizeBy(PriorityField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityField {
    Priority,
    Deadline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisorPolicy {
    pub id: String,
    pub decision_rule: DecisionRule,
    #[serde(default = "yes")]
    pub available: bool,
}

fn yes() -> bool {
    true
}

impl SupervisorPolicy {
    pub fn new(id: &str, decision_rule: DecisionRule) -> Self {
        SupervisorPolicy {
            id: id.to_string(),
            decision_rule,
            available: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCase {
    pub case_id: u64,
    pub executor: RobotId,
    pub capability: String,
    /// Competing or reviewable requests, in arrival order.
    pub claims: Vec<CapabilityRequest>,
}

impl ReviewCase {
    pub fn robots(&self) -> BTreeSet<RobotId> {
        let mut s: BTreeSet<RobotId> = self.claims.iter().map(|c| c.requester.clone()).collect();
        s.insert(self.executor.clone());
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    Deferred,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorResolution {
    pub supervisor: String,
    pub verdicts: Vec<(RequestId, Verdict)>,
    pub events: Vec<AuditEvent>,
}

impl SupervisorResolution {
    pub fn verdict(&self, id: &RequestId) -> Option<&Verdict> {
        self.verdicts.iter().find(|(r, _)| r == id).map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevocationCause {
    TrustDowngrade,
    ContextExpiration,
    HumanOverride,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevocationEffect {
    pub changes: Vec<TrustChange>,
    /// Pending requests over the revoked edge that no longer pass evaluation.
    pub rejected: Vec<RequestId>,
    /// Pending requests over the revoked edge that remain admissible.
    pub still_admissible: Vec<RequestId>,
    pub events: Vec<AuditEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureDescriptor {
    pub failure_id: u64,
    pub robot: RobotId,
    pub capability: String,
    pub ctx: TaskContext,
    /// Owner of the task the failed capability serves.
    pub task_owner: RobotId,
    /// Last checkpoint the task reached, if any.
    pub checkpoint: Option<String>,
    pub detected_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "step")]
pub enum RecoveryStep {
    Substitute { candidate: Candidate },
    Reassign { to: Candidate },
    Escalate { from: RecoveryLevel, to: RecoveryLevel },
    HumanResolved { supervisor: String },
    Unrecovered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub step: RecoveryStep,
    pub events: Vec<AuditEvent>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FederationError {
    #[error("a local policy deny for {0} reached the fleet policy resolver")]
    DenyReachedSupervisor(RequestId),
    #[error("review case {0} has no claims")]
    EmptyCase(u64),
    #[error("local recovery level is handled by the robot runtime")]
    LocalLevel,
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// The federation layer of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Federation {
    pub registry: Registry,
    pub trust: TrustMatrix,
    pub policies: BTreeMap<RobotId, PolicyScope>,
    pub domains: BTreeMap<RobotId, BTreeSet<String>>,
    /// Principals with supervisor-level registry visibility.
    pub supervisors: BTreeSet<RobotId>,
    pub supervisor_policies: BTreeMap<String, SupervisorPolicy>,
    pub ablation: Ablation,
    #[serde(default)]
    pub gates: QueryGates,
}

impl Federation {
    pub fn new() -> Self {
        Federation {
            registry: Registry::new(),
            trust: TrustMatrix::new(),
            policies: BTreeMap::new(),
            domains: BTreeMap::new(),
            supervisors: BTreeSet::new(),
            supervisor_policies: BTreeMap::new(),
            ablation: Ablation::none(),
            gates: QueryGates::default(),
        }
    }

    pub fn apply_ablation(&mut self, ablation: Ablation) {
        self.gates = QueryGates {
            visibility: true,
            trust: !ablation.disables(Component::Trust),
            policy: !ablation.disables(Component::PolicyComposition),
        };
        self.ablation = ablation;
    }

    pub fn is_available(&self) -> bool {
        self.registry.is_online()
    }

    pub fn policy(&self, r: &RobotId) -> PolicyScope {
        self.policies.get(r).cloned().unwrap_or_default()
    }

    pub fn scope_with(&self, gates: QueryGates) -> QueryScope<'_> {
        QueryScope {
            trust: &self.trust,
            policies: &self.policies,
            domains: &self.domains,
            supervisors: &self.supervisors,
            gates,
        }
    }

    /// Governed query. Empty when the registry component is ablated.
    pub fn query(&self, q: &CandidateQuery) -> Vec<Candidate> {
        if self.ablation.disables(Component::Registry) {
            return Vec::new();
        }
        self.registry.query(q, &self.scope_with(self.gates))
    }

    /// Query with some gates lifted, as used by the baseline architectures.
    pub fn query_with(&self, q: &CandidateQuery, gates: QueryGates) -> Vec<Candidate> {
        self.registry.query(q, &self.scope_with(gates))
    }

    pub fn trust_ok(&self, requester: &RobotId, executor: &RobotId, capability: &str) -> bool {
        if self.ablation.disables(Component::Trust) {
            return true;
        }
        let required = self
            .registry
            .find(executor, capability)
            .map(|r| r.trust_req)
            .unwrap_or(TrustScope::Capability);
        trust_sufficient(self.trust.scope(requester, executor, capability), required)
    }

    /// Composed outcome as enforced at run time. Ablating composition lets everything through.
    pub fn composed(&self, requester: &RobotId, executor: &RobotId, ecm: &EcmDescriptor, ctx: &TaskContext) -> PolicyOutcome {
        if self.ablation.disables(Component::PolicyComposition) {
            return PolicyOutcome::Allow;
        }
        self.composed_full(requester, executor, ecm, ctx)
    }

    /// Composed outcome under the configured policies regardless of ablation.
    pub fn composed_full(&self, requester: &RobotId, executor: &RobotId, ecm: &EcmDescriptor, ctx: &TaskContext) -> PolicyOutcome {
        compose_policy(&self.policy(requester), &self.policy(executor), ecm, ctx)
    }

    pub fn evaluate_authority(
        &self,
        requester: &RobotId,
        executor: &RobotId,
        ecm: &EcmDescriptor,
        ctx: &TaskContext,
        executor_runtime: Option<&RobotRuntime>,
    ) -> AuthorityTuple {
        let a_req = self.trust_ok(requester, executor, &ecm.capability_name);
        let local_ok = self.ablation.disables(Component::PolicyComposition)
            || self.policy(executor).evaluate(ecm, ctx) != PolicyOutcome::Deny;
        let runtime_ok = executor_runtime.map_or(true, |rt| !rt.failed && rt.possesses(&ecm.capability_name));
        AuthorityTuple {
            a_req,
            a_exec: local_ok && runtime_ok,
            a_ovr: if ctx.is_emergency() {
                OverrideLevel::HardPreempt
            } else {
                OverrideLevel::None
            },
            a_audit: if requester != executor {
                AuditLevel::Fleet
            } else {
                AuditLevel::Local
            },
        }
    }

    /// Per-link admissibility: possession, advertisement, trust, composed policy and execution authority.
    pub fn admissible_request(&self, req: &CapabilityRequest, auth: &AuthorityTuple, executor: Option<&RobotRuntime>) -> bool {
        req.requester != req.executor
            && executor.map_or(true, |rt| rt.possesses(&req.ecm.capability_name))
            && self.registry.is_advertised(&req.executor, &req.ecm.capability_name)
            && auth.a_req
            && auth.a_exec
            && self.composed(&req.requester, &req.executor, &req.ecm, &req.ctx) != PolicyOutcome::Deny
    }

    /// Lowers or removes trust on an edge. In-flight executions are untouched; pending
    /// requests over the edge are re-evaluated.
    pub fn revoke_authority(
        &mut self,
        truster: &RobotId,
        trustee: &RobotId,
        cause: RevocationCause,
        pending: &[CapabilityRequest],
        at: SimTime,
    ) -> RevocationEffect {
        let changes = match cause {
            RevocationCause::TrustDowngrade => self.trust.record_violation(truster, trustee, at),
            RevocationCause::ContextExpiration | RevocationCause::HumanOverride => self.trust.revoke(truster, trustee, at),
        };
        let principal = match cause {
            RevocationCause::HumanOverride => Principal::Supervisor(FLEET_SUPERVISOR.into()),
            _ => Principal::Federation("trust_manager".into()),
        };
        let events = changes
            .iter()
            .map(|c| {
                AuditEvent::new(
                    EventKind::TrustChanged,
                    at,
                    principal.clone(),
                    Payload::Trust {
                        truster: c.key.truster.clone(),
                        trustee: c.key.trustee.clone(),
                        pattern: c.key.pattern.clone(),
                        from: c.from,
                        to: c.to,
                        cause: c.cause,
                    },
                )
                .origin(truster)
                .owner(trustee)
                .escalation(Principal::Supervisor(FLEET_SUPERVISOR.into()))
            })
            .collect();
        let mut rejected = Vec::new();
        let mut still_admissible = Vec::new();
        for req in pending.iter().filter(|r| &r.requester == truster && &r.executor == trustee) {
            if self.trust_ok(&req.requester, &req.executor, &req.ecm.capability_name) {
                still_admissible.push(req.id());
            } else {
                rejected.push(req.id());
            }
        }
        RevocationEffect {
            changes,
            rejected,
            still_admissible,
            events,
        }
    }

    pub fn route_case(&self, case: &ReviewCase) -> String {
        let robots = case.robots();
        if robots.len() >= 2 {
            FLEET_SUPERVISOR.to_string()
        } else {
            format!("H_{}", case.executor)
        }
    }

    pub fn review_raised_event(&self, case: &ReviewCase, at: SimTime) -> AuditEvent {
        let first = &case.claims[0];
        AuditEvent::new(
            EventKind::PolicyReviewRaised,
            at,
            Principal::Federation("policy_resolver".into()),
            Payload::Review {
                case_id: case.case_id,
                capability: case.capability.clone(),
                claimants: case.claims.iter().map(|c| c.requester.clone()).collect(),
            },
        )
        .origin(&first.requester)
        .owner(&case.executor)
        .escalation(Principal::Supervisor(self.route_case(case)))
        .request(&first.id())
        .attributed(Attribution::TRAVERSAL)
    }

    /// Routes a review or contention case to its supervisor and applies the decision rule.
    pub fn resolve_fleet_policy(&self, case: &ReviewCase, at: SimTime) -> Result<SupervisorResolution, FederationError> {
        if case.claims.is_empty() {
            return Err(FederationError::EmptyCase(case.case_id));
        }
        for c in &case.claims {
            if self.composed(&c.requester, &c.executor, &c.ecm, &c.ctx) == PolicyOutcome::Deny {
                return Err(FederationError::DenyReachedSupervisor(c.id()));
            }
        }
        let supervisor = self.route_case(case);
        let rule = self
            .supervisor_policies
            .get(&supervisor)
            .map(|p| p.decision_rule.clone())
            .unwrap_or(DecisionRule::ApproveFirst);
        let winner: Option<usize> = match &rule {
            DecisionRule::ApproveFirst => Some(0),
            DecisionRule::ApproveSecond => Some(if case.claims.len() > 1 { 1 } else { 0 }),
            DecisionRule::Approve(r) => case.claims.iter().position(|c| &c.requester == r),
            DecisionRule::RejectAll => None,
            DecisionRule::PrioritizeBy(PriorityField::Priority) => case
                .claims
                .iter()
                .enumerate()
                .max_by(|(i, a), (j, b)| a.ctx.priority.cmp(&b.ctx.priority).then(j.cmp(i)))
                .map(|(i, _)| i),
            DecisionRule::PrioritizeBy(PriorityField::Deadline) => case
                .claims
                .iter()
                .enumerate()
                .min_by_key(|(i, c)| (c.ctx.deadline.unwrap_or(SimTime(u64::MAX)), *i))
                .map(|(i, _)| i),
        };
        let verdicts: Vec<(RequestId, Verdict)> = case
            .claims
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let v = match winner {
                    Some(w) if w == i => Verdict::Approved,
                    Some(_) => Verdict::Deferred,
                    None => Verdict::Rejected,
                };
                (c.id(), v)
            })
            .collect();
        let events = case
            .claims
            .iter()
            .zip(&verdicts)
            .map(|(c, (_, v))| {
                let decision = match v {
                    Verdict::Approved => "approve",
                    Verdict::Deferred => "defer",
                    Verdict::Rejected => "reject",
                };
                AuditEvent::new(
                    EventKind::SupervisorDecision,
                    at,
                    Principal::Supervisor(supervisor.clone()),
                    Payload::Decision {
                        case_id: case.case_id,
                        decision: decision.to_string(),
                        winner: winner.map(|w| case.claims[w].requester.clone()),
                    },
                )
                .origin(&c.requester)
                .owner(&case.executor)
                .escalation(Principal::Supervisor(supervisor.clone()))
                .request(&c.id())
            })
            .collect();
        Ok(SupervisorResolution {
            supervisor,
            verdicts,
            events,
        })
    }

    /// One step of recovery above the local level.
    pub fn orchestrate_recovery(&self, failure: &FailureDescriptor, level: RecoveryLevel) -> Result<RecoveryOutcome, FederationError> {
        let escalate = |from: RecoveryLevel, to: RecoveryLevel, principal: Principal, attribution: Attribution| {
            AuditEvent::new(
                EventKind::RecoveryEscalated,
                failure.detected_at,
                principal.clone(),
                Payload::Escalation {
                    failure_id: failure.failure_id,
                    from,
                    to,
                },
            )
            .owner(&failure.robot)
            .origin(&failure.task_owner)
            .escalation(principal)
            .task(&failure.ctx.task_id)
            .attributed(attribution)
        };
        if self.ablation.disables(Component::LayeredRecovery) && level != RecoveryLevel::Human {
            let principal = Principal::Federation("recovery".into());
            return Ok(RecoveryOutcome {
                step: RecoveryStep::Escalate {
                    from: level,
                    to: RecoveryLevel::Human,
                },
                events: vec![escalate(level, RecoveryLevel::Human, principal, Attribution::TRAVERSAL)],
            });
        }
        match level {
            RecoveryLevel::Local => Err(FederationError::LocalLevel),
            RecoveryLevel::Peer => {
                let ecm = EcmDescriptor::new(failure.capability.clone(), crate::model::EcmContract::with_duration(1.0, 1.0))?;
                let pattern = ecm.family_pattern();
                let q = CandidateQuery::new(&failure.robot, &pattern, &failure.ctx);
                let found: Vec<Candidate> = self
                    .query(&q)
                    .into_iter()
                    .filter(|c| c.ecm.capability_name == failure.capability)
                    .collect();
                let me = Principal::robot(&failure.robot);
                let mut events = vec![
                    AuditEvent::new(
                        EventKind::RequestIssued,
                        failure.detected_at,
                        me.clone(),
                        Payload::Request {
                            stage: crate::audit::RequestStage::Query,
                            capability: pattern.clone(),
                            target: None,
                        },
                    )
                    .origin(&failure.robot)
                    .owner(&failure.robot)
                    .escalation(me.clone())
                    .task(&failure.ctx.task_id),
                    AuditEvent::new(
                        EventKind::CandidatesReturned,
                        failure.detected_at,
                        Principal::Federation("registry".into()),
                        Payload::Candidates {
                            pattern,
                            candidates: found.iter().map(|c| c.robot.clone()).collect(),
                        },
                    )
                    .origin(&failure.robot)
                    .escalation(me.clone())
                    .task(&failure.ctx.task_id),
                ];
                match found.into_iter().next() {
                    Some(candidate) => Ok(RecoveryOutcome {
                        step: RecoveryStep::Substitute { candidate },
                        events,
                    }),
                    None => {
                        let to = escalate_recovery_level(level)?;
                        events.push(escalate(
                            level,
                            to,
                            Principal::Federation("recovery".into()),
                            Attribution::TRAVERSAL,
                        ));
                        Ok(RecoveryOutcome {
                            step: RecoveryStep::Escalate { from: level, to },
                            events,
                        })
                    }
                }
            }
            RecoveryLevel::Fleet => {
                let fed = Principal::Federation("recovery".into());
                let candidate = failure.checkpoint.as_ref().and_then(|_| {
                    let q = CandidateQuery::new(&failure.task_owner, &failure.capability, &failure.ctx);
                    self.query(&q)
                        .into_iter()
                        .find(|c| c.robot != failure.robot && c.ecm.capability_name == failure.capability)
                });
                match candidate {
                    Some(to) => {
                        let ev = AuditEvent::new(
                            EventKind::Reassignment,
                            failure.detected_at,
                            fed.clone(),
                            Payload::Reassign {
                                failure_id: failure.failure_id,
                                from: failure.robot.clone(),
                                to: to.robot.clone(),
                            },
                        )
                        .origin(&failure.task_owner)
                        .owner(&to.robot)
                        .escalation(fed)
                        .task(&failure.ctx.task_id)
                        .attributed(Attribution::TRAVERSAL);
                        Ok(RecoveryOutcome {
                            step: RecoveryStep::Reassign { to },
                            events: vec![ev],
                        })
                    }
                    None => {
                        let to = escalate_recovery_level(level)?;
                        Ok(RecoveryOutcome {
                            step: RecoveryStep::Escalate { from: level, to },
                            events: vec![escalate(level, to, fed, Attribution::TRAVERSAL)],
                        })
                    }
                }
            }
            RecoveryLevel::Human => {
                let sup = self.supervisor_policies.get(FLEET_SUPERVISOR);
                match sup {
                    Some(s) if s.available => {
                        let p = Principal::Supervisor(s.id.clone());
                        let ev = AuditEvent::new(
                            EventKind::SupervisorDecision,
                            failure.detected_at,
                            p.clone(),
                            Payload::Decision {
                                case_id: failure.failure_id,
                                decision: "manual_recovery".into(),
                                winner: Some(failure.robot.clone()),
                            },
                        )
                        .origin(&failure.task_owner)
                        .owner(&failure.robot)
                        .escalation(p)
                        .task(&failure.ctx.task_id);
                        Ok(RecoveryOutcome {
                            step: RecoveryStep::HumanResolved {
                                supervisor: s.id.clone(),
                            },
                            events: vec![ev],
                        })
                    }
                    _ => Ok(RecoveryOutcome {
                        step: RecoveryStep::Unrecovered,
                        events: Vec::new(),
                    }),
                }
            }
        }
    }
}

impl Default for Federation {
    fn default() -> Self {
        Federation::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_names_parse() {
        for c in Component::ALL {
            assert_eq!(c.as_str().parse::<Component>().unwrap(), c);
        }
        assert!("telemetry".parse::<Component>().is_err());
        assert_eq!(Ablation::parse(&["-trust"]).unwrap().label(), "-trust");
        assert_eq!(Ablation::none().label(), "full");
    }
}
