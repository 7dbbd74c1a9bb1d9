//! Governed capability registry: advertisement records, visibility modes,
//! availability and filtered candidate queries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    compose_policy, pattern_matches, trust_sufficient, AuthorityTuple, ContextPredicate, EcmDescriptor,
    PolicyOutcome, PolicyScope, RecoveryBudget, RobotId, TaskContext, TrustScope,
};
use crate::trust::TrustMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    Ready,
    Busy,
    Degraded,
    Restricted,
    Offline,
}

impl Availability {
    pub fn as_str(self) -> &'static str {
        match self {
            Availability::Ready => "ready",
            Availability::Busy => "busy",
            Availability::Degraded => "degraded",
            Availability::Restricted => "restricted",
            Availability::Offline => "offline",
        }
    }

    fn discoverable(self) -> bool {
        matches!(self, Availability::Ready | Availability::Degraded | Availability::Busy)
    }

    fn order(self) -> u8 {
        match self {
            Availability::Ready => 0,
            Availability::Degraded => 1,
            Availability::Busy => 2,
            Availability::Restricted => 3,
            Availability::Offline => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "arg")]
pub enum Visibility {
    Global,
    Domain(String),
    TrustGated(TrustScope),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertisementRecord {
    pub robot: RobotId,
    pub ecm: EcmDescriptor,
    pub trust_req: TrustScope,
    #[serde(default)]
    pub policy_req: Vec<ContextPredicate>,
    pub auth_profile: AuthorityTuple,
    pub availability: Availability,
    #[serde(default)]
    pub embodiment: String,
    pub visibility: Visibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateQuery {
    pub requester: RobotId,
    pub capability_pattern: String,
    pub ctx: TaskContext,
    #[serde(default)]
    pub budget: Option<RecoveryBudget>,
    #[serde(default)]
    pub constraints: Vec<ContextPredicate>,
}

impl CandidateQuery {
    pub fn new(requester: &RobotId, pattern: &str, ctx: &TaskContext) -> Self {
        CandidateQuery {
            requester: requester.clone(),
            capability_pattern: pattern.to_string(),
            ctx: ctx.clone(),
            budget: None,
            constraints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub robot: RobotId,
    pub ecm: EcmDescriptor,
    pub availability: Availability,
}

/// Which query filters are active. Ablations and baselines switch some off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryGates {
    pub visibility: bool,
    pub trust: bool,
    pub policy: bool,
}

impl Default for QueryGates {
    fn default() -> Self {
        QueryGates {
            visibility: true,
            trust: true,
            policy: true,
        }
    }
}

/// Read-only fleet context a query is evaluated against.
pub struct QueryScope<'a> {
    pub trust: &'a TrustMatrix,
    pub policies: &'a BTreeMap<RobotId, PolicyScope>,
    pub domains: &'a BTreeMap<RobotId, BTreeSet<String>>,
    pub supervisors: &'a BTreeSet<RobotId>,
    pub gates: QueryGates,
}

impl QueryScope<'_> {
    fn policy(&self, r: &RobotId) -> PolicyScope {
        self.policies.get(r).cloned().unwrap_or_default()
    }

    pub fn visible(&self, record: &AdvertisementRecord, requester: &RobotId) -> bool {
        if !self.gates.visibility || self.supervisors.contains(requester) {
            return true;
        }
        match &record.visibility {
            Visibility::Global => true,
            Visibility::Domain(tag) => self.domains.get(requester).is_some_and(|d| d.contains(tag)),
            Visibility::TrustGated(scope) => {
                let granted = self.trust.scope(&record.robot, requester, &record.ecm.capability_name);
                !self.gates.trust || trust_sufficient(granted, *scope)
            }
        }
    }

    pub fn trusted(&self, record: &AdvertisementRecord, requester: &RobotId) -> bool {
        if !self.gates.trust {
            return true;
        }
        let granted = self.trust.scope(requester, &record.robot, &record.ecm.capability_name);
        trust_sufficient(granted, record.trust_req)
    }

    pub fn composed(&self, record: &AdvertisementRecord, requester: &RobotId, ctx: &TaskContext) -> PolicyOutcome {
        if !self.gates.policy {
            return PolicyOutcome::Allow;
        }
        compose_policy(&self.policy(requester), &self.policy(&record.robot), &record.ecm, ctx)
    }

    pub fn contract_ok(record: &AdvertisementRecord, q: &CandidateQuery) -> bool {
        record.ecm.contract.preconditions_hold(&q.ctx)
            && record.policy_req.iter().all(|p| p.holds(&q.ctx))
            && q.constraints.iter().all(|p| p.holds(&q.ctx))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("{robot} does not possess {capability} and cannot advertise it")]
    NotPossessed { robot: RobotId, capability: String },
    #[error("no advertisement for {capability} by {robot}")]
    UnknownAdvertisement { robot: RobotId, capability: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    records: Vec<AdvertisementRecord>,
    #[serde(default)]
    queued: Vec<AdvertisementRecord>,
    #[serde(default = "yes")]
    online: bool,
}

fn yes() -> bool {
    true
}

pub struct AvailabilityChange {
    pub from: Availability,
    pub to: Availability,
}

impl Registry {
    pub fn new() -> Self {
        Registry {
            records: Vec::new(),
            queued: Vec::new(),
            online: true,
        }
    }

    pub fn records(&self) -> &[AdvertisementRecord] {
        &self.records
    }

    pub fn is_online(&self) -> bool {
        self.online
    }

    /// `possessed` is the advertising robot's capability set.
    pub fn advertise(&mut self, record: AdvertisementRecord, possessed: &[EcmDescriptor]) -> Result<(), RegistryError> {
        if !possessed.iter().any(|e| e.capability_name == record.ecm.capability_name) {
            return Err(RegistryError::NotPossessed {
                robot: record.robot.clone(),
                capability: record.ecm.capability_name.clone(),
            });
        }
        if !self.online {
            self.queued.push(record);
            return Ok(());
        }
        self.upsert(record);
        Ok(())
    }

    fn upsert(&mut self, record: AdvertisementRecord) {
        match self
            .records
            .iter_mut()
            .find(|r| r.robot == record.robot && r.ecm.capability_name == record.ecm.capability_name)
        {
            Some(existing) => *existing = record,
            None => self.records.push(record),
        }
    }

    pub fn withdraw(&mut self, robot: &RobotId, capability: &str) {
        self.records
            .retain(|r| !(&r.robot == robot && r.ecm.capability_name == capability));
    }

    pub fn set_online(&mut self, online: bool) -> usize {
        self.online = online;
        if !online {
            return 0;
        }
        let queued = std::mem::take(&mut self.queued);
        let n = queued.len();
        for r in queued {
            self.upsert(r);
        }
        n
    }

    pub fn find(&self, robot: &RobotId, capability: &str) -> Option<&AdvertisementRecord> {
        self.records
            .iter()
            .find(|r| &r.robot == robot && r.ecm.capability_name == capability)
    }

    pub fn is_advertised(&self, robot: &RobotId, capability: &str) -> bool {
        self.find(robot, capability).is_some()
    }

    pub fn update_availability(
        &mut self,
        robot: &RobotId,
        capability: &str,
        state: Availability,
    ) -> Result<AvailabilityChange, RegistryError> {
        let record = self
            .records
            .iter_mut()
            .find(|r| &r.robot == robot && r.ecm.capability_name == capability)
            .ok_or_else(|| RegistryError::UnknownAdvertisement {
                robot: robot.clone(),
                capability: capability.to_string(),
            })?;
        let from = record.availability;
        record.availability = state;
        Ok(AvailabilityChange { from, to: state })
    }

    /// Candidates in deterministic order: ready, degraded, busy; then robot id.
    pub fn query(&self, q: &CandidateQuery, scope: &QueryScope<'_>) -> Vec<Candidate> {
        if !self.online {
            return Vec::new();
        }
        let mut out: Vec<Candidate> = self
            .records
            .iter()
            .filter(|r| pattern_matches(&q.capability_pattern, &r.ecm.capability_name))
            .filter(|r| r.robot != q.requester)
            .filter(|r| scope.visible(r, &q.requester))
            .filter(|r| scope.trusted(r, &q.requester))
            .filter(|r| scope.composed(r, &q.requester, &q.ctx) != PolicyOutcome::Deny)
            .filter(|r| r.availability.discoverable())
            .filter(|r| QueryScope::contract_ok(r, q))
            .map(|r| Candidate {
                robot: r.robot.clone(),
                ecm: r.ecm.clone(),
                availability: r.availability,
            })
            .collect();
        out.sort_by(|a, b| {
            (a.availability.order(), &a.robot, &a.ecm.capability_name).cmp(&(
                b.availability.order(),
                &b.robot,
                &b.ecm.capability_name,
            ))
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AuditLevel, EcmContract, OverrideLevel};

    fn rec(robot: &str, cap: &str, vis: Visibility) -> AdvertisementRecord {
        AdvertisementRecord {
            robot: robot.into(),
            ecm: EcmDescriptor::new(cap, EcmContract::with_duration(1.0, 2.0)).unwrap(),
            trust_req: TrustScope::Capability,
            policy_req: vec![],
            auth_profile: AuthorityTuple {
                a_req: true,
                a_exec: true,
                a_ovr: OverrideLevel::None,
                a_audit: AuditLevel::Fleet,
            },
            availability: Availability::Ready,
            embodiment: String::new(),
            visibility: vis,
        }
    }

    #[test]
    fn non_possessed_advertisement_rejected() {
        let mut reg = Registry::new();
        let r = rec("robot_a", "door.open.secure", Visibility::Global);
        let err = reg.advertise(r, &[]).unwrap_err();
        assert!(matches!(err, RegistryError::NotPossessed { .. }));
        assert!(reg.records().is_empty());
    }

    #[test]
    fn unknown_availability_update_errors() {
        let mut reg = Registry::new();
        assert!(reg
            .update_availability(&"robot_x".into(), "anything", Availability::Ready)
            .is_err());
    }

    #[test]
    fn queued_while_offline_then_flushed() {
        let mut reg = Registry::new();
        reg.set_online(false);
        let r = rec("robot_b", "door.open.basic", Visibility::Global);
        let e = r.ecm.clone();
        reg.advertise(r, &[e]).unwrap();
        assert!(reg.records().is_empty());
        assert_eq!(reg.set_online(true), 1);
        assert_eq!(reg.records().len(), 1);
    }

    #[test]
    fn ordering_ready_before_degraded_then_id() {
        let mut reg = Registry::new();
        for (robot, avail) in [("robot_c", Availability::Ready), ("robot_a", Availability::Degraded), ("robot_b", Availability::Ready)] {
            let mut r = rec(robot, "navigate.indoor", Visibility::Global);
            r.availability = avail;
            let e = r.ecm.clone();
            reg.advertise(r, &[e]).unwrap();
        }
        let mut trust = TrustMatrix::new();
        for r in ["robot_a", "robot_b", "robot_c"] {
            trust.set(&"robot_z".into(), &r.into(), "*", TrustScope::Task, Default::default());
        }
        let policies = BTreeMap::new();
        let domains = BTreeMap::new();
        let sup = BTreeSet::new();
        let scope = QueryScope {
            trust: &trust,
            policies: &policies,
            domains: &domains,
            supervisors: &sup,
            gates: QueryGates::default(),
        };
        let got: Vec<String> = reg
            .query(&CandidateQuery::new(&"robot_z".into(), "navigate.*", &TaskContext::new("t")), &scope)
            .into_iter()
            .map(|c| c.robot.0)
            .collect();
        assert_eq!(got, vec!["robot_b", "robot_c", "robot_a"]);
    }
}
